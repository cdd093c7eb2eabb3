//! UDP gateway made of two partitions joined only by frame rings.
//!
//! `net-ingress` owns the GCS-facing socket. It checks framing, pushes whole
//! frames onto the uplink ring and sends downlink frames back to the last
//! GCS address it heard from. It never looks at payload semantics.
//!
//! `fcs-ingress` owns the FCS-facing socket and the [`Monitor`]. Uplink
//! frames are decoded and attested, then forwarded verbatim on accept.
//! FCS datagrams update the telemetry mirror and go onto the downlink ring
//! without attestation.
//!
//! [`GatewayMode::Passthrough`] replaces both with a single direct forwarder
//! and is only meant as a latency baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestor::{rejection_feedback, Decision, Monitor, MonitorConfig, SessionExpired, SessionStatus, Verdict};
use crate::codec::{frame_decode, frame_encode, DecodeError, FrameScanner, MavMessage, Scanned};
use crate::dsl::{parse_spec_with, Diagnostic, ProtocolSpec, DEFAULT_SPEC};
use crate::ring::{self, Backoff, Consumer, Producer, PushError, RingError};

const MAX_DATAGRAM: usize = 65_536;
/// Socket reads per loop iteration before servicing the rings.
const RECV_BATCH: usize = 32;
/// Frames popped per loop iteration before servicing the socket.
const POP_BATCH: usize = 64;

pub const VERDICT_LOG: &str = "verdicts.jsonl";
pub const FORWARD_LOG: &str = "forwarded.jsonl";
pub const FRAME_LOG: &str = "frames.jsonl";
pub const EVENT_LOG: &str = "events.jsonl";
pub const COUNTERS_FILE: &str = "counters.json";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{}: {} diagnostic(s), first: {}", .path, .diagnostics.len(), .diagnostics[0])]
    Spec { path: String, diagnostics: Vec<Diagnostic> },
    #[error("ring: {0}")]
    Ring(#[from] RingError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GatewayMode {
    /// Direct UDP forwarder, no rings, no monitor.
    #[serde(rename = "passthrough")]
    Passthrough,
    /// Partitioned gateway whose monitor has an empty spec.
    #[serde(rename = "gateway")]
    Gateway,
    /// Partitioned gateway enforcing the configured spec.
    #[default]
    #[serde(rename = "gateway+spec")]
    GatewaySpec,
}

impl GatewayMode {
    pub const ALL: [GatewayMode; 3] = [GatewayMode::Passthrough, GatewayMode::Gateway, GatewayMode::GatewaySpec];

    pub fn name(self) -> &'static str {
        match self {
            GatewayMode::Passthrough => "passthrough",
            GatewayMode::Gateway => "gateway",
            GatewayMode::GatewaySpec => "gateway+spec",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for GatewayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingConfig {
    pub capacity: usize,
    pub slot_size: usize,
    pub max_spins: u32,
    pub sleep_us: u64,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig {
            capacity: ring::DEFAULT_CAPACITY,
            slot_size: ring::DEFAULT_SLOT_SIZE,
            max_spins: 1000,
            sleep_us: 50,
        }
    }
}

impl RingConfig {
    pub fn backoff(&self) -> Backoff {
        Backoff::new(self.max_spins, Duration::from_micros(self.sleep_us))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConfig {
    /// Answer a rejected COMMAND_LONG with COMMAND_ACK(DENIED).
    pub command_ack: bool,
    /// Answer other rejected messages with a warning STATUSTEXT.
    pub statustext: bool,
    pub sysid: u8,
    pub compid: u8,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig { command_ack: true, statustext: false, sysid: 1, compid: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub gcs_listen: SocketAddr,
    pub fcs_target: SocketAddr,
    /// Local address of the FCS-facing socket.
    pub fcs_bind: SocketAddr,
    pub ring: RingConfig,
    /// Spec file; the built-in default spec when absent.
    pub spec: Option<PathBuf>,
    pub defines: BTreeMap<String, f64>,
    pub feedback: FeedbackConfig,
    pub default_deny: bool,
    pub stale_window_ms: u64,
    pub session_timeout_ms: u64,
    pub log_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let mc = MonitorConfig::default();
        GatewayConfig {
            mode: GatewayMode::GatewaySpec,
            gcs_listen: ([0, 0, 0, 0], 14550).into(),
            fcs_target: ([127, 0, 0, 1], 14560).into(),
            fcs_bind: ([0, 0, 0, 0], 0).into(),
            ring: RingConfig::default(),
            spec: None,
            defines: BTreeMap::new(),
            feedback: FeedbackConfig::default(),
            default_deny: false,
            stale_window_ms: mc.stale_window.as_millis() as u64,
            session_timeout_ms: mc.session_timeout.as_millis() as u64,
            log_dir: None,
        }
    }
}

impl GatewayConfig {
    /// Gateway on loopback with ephemeral ports, for tests and simulations.
    pub fn loopback(mode: GatewayMode, fcs_target: SocketAddr) -> Self {
        GatewayConfig {
            mode,
            gcs_listen: ([127, 0, 0, 1], 0).into(),
            fcs_bind: ([127, 0, 0, 1], 0).into(),
            fcs_target,
            ..Default::default()
        }
    }

    pub fn monitor_config(&self) -> MonitorConfig {
        MonitorConfig {
            default_deny: self.default_deny,
            stale_window: Duration::from_millis(self.stale_window_ms),
            session_timeout: Duration::from_millis(self.session_timeout_ms),
        }
    }

    /// Reads, parses and validates the configured spec with the defines
    /// applied.
    pub fn load_spec(&self) -> Result<ProtocolSpec, GatewayError> {
        let (text, path) = match &self.spec {
            Some(p) => (std::fs::read_to_string(p)?, p.display().to_string()),
            None => (DEFAULT_SPEC.to_string(), "default.spec".to_string()),
        };
        parse_spec_with(&text, self.defines.iter().map(|(k, v)| (k.as_str(), *v)))
            .map_err(|diagnostics| GatewayError::Spec { path, diagnostics })
    }
}

// ---------------------------------------------------------------------------
// Records and counters
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    /// Position of the frame in the uplink ring.
    pub frame: u64,
    pub timestamp_us: u64,
    pub msgid: u32,
    pub msg: Option<String>,
    pub seq: u8,
    pub checksum: u16,
    pub decision: Decision,
    pub rule: Option<String>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardRecord {
    pub frame: u64,
    pub timestamp_us: u64,
    pub msgid: u32,
    pub seq: u8,
    pub checksum: u16,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// One raw frame as seen by the trusted partition; input for offline replay.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t_us: u64,
    pub dir: Direction,
    pub hex: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub uplink_datagrams: u64,
    pub uplink_frames: u64,
    /// Runs of bytes that did not form a frame.
    pub malformed: u64,
    pub junk_bytes: u64,
    pub ring_full_waits: u64,
    pub oversize_dropped: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub forwarded: u64,
    /// Trusted-side decode failures on frames net-ingress had validated.
    pub integrity_alarms: u64,
    pub feedback_sent: u64,
    pub downlink_datagrams: u64,
    pub downlink_frames: u64,
    pub downlink_dropped: u64,
    pub downlink_sent: u64,
    pub downlink_unrouted: u64,
    pub sessions_expired: u64,
    pub socket_errors: u64,
}

impl GatewayStats {
    fn merge(&mut self, o: &GatewayStats) {
        self.uplink_datagrams += o.uplink_datagrams;
        self.uplink_frames += o.uplink_frames;
        self.malformed += o.malformed;
        self.junk_bytes += o.junk_bytes;
        self.ring_full_waits += o.ring_full_waits;
        self.oversize_dropped += o.oversize_dropped;
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.forwarded += o.forwarded;
        self.integrity_alarms += o.integrity_alarms;
        self.feedback_sent += o.feedback_sent;
        self.downlink_datagrams += o.downlink_datagrams;
        self.downlink_frames += o.downlink_frames;
        self.downlink_dropped += o.downlink_dropped;
        self.downlink_sent += o.downlink_sent;
        self.downlink_unrouted += o.downlink_unrouted;
        self.sessions_expired += o.sessions_expired;
        self.socket_errors += o.socket_errors;
    }
}

/// Counters readable while the gateway runs.
#[derive(Debug, Default)]
pub struct Progress {
    /// Uplink frames fully handled (forwarded, rejected or dropped).
    pub uplink_done: AtomicU64,
    pub forwarded: AtomicU64,
}

#[derive(Clone, Debug, Default)]
pub struct GatewayReport {
    pub mode: GatewayMode,
    pub stats: GatewayStats,
    pub verdicts: Vec<VerdictRecord>,
    pub forwarded: Vec<ForwardRecord>,
    pub expired: Vec<SessionExpired>,
    /// Iteration session states when the gateway stopped.
    pub sessions: BTreeMap<String, SessionStatus>,
}

impl GatewayReport {
    /// Forwarded frames that lack a matching Accept verdict, followed by
    /// Accept verdicts that were never forwarded. Both empty means the
    /// forwarded-frame log equals the set of accepted frames.
    pub fn audit(&self) -> (Vec<ForwardRecord>, Vec<VerdictRecord>) {
        use std::collections::BTreeSet;
        type Key = (u64, u32, u8, u16);
        let accepted: BTreeSet<Key> = self
            .verdicts
            .iter()
            .filter(|v| v.decision == Decision::Accept)
            .map(|v| (v.frame, v.msgid, v.seq, v.checksum))
            .collect();
        let forwarded: BTreeSet<Key> = self.forwarded.iter().map(|f| (f.frame, f.msgid, f.seq, f.checksum)).collect();
        let extra = self
            .forwarded
            .iter()
            .filter(|f| !accepted.contains(&(f.frame, f.msgid, f.seq, f.checksum)))
            .cloned()
            .collect();
        let missing = self
            .verdicts
            .iter()
            .filter(|v| v.decision == Decision::Accept)
            .filter(|v| !forwarded.contains(&(v.frame, v.msgid, v.seq, v.checksum)))
            .cloned()
            .collect();
        (extra, missing)
    }
}

struct Logs {
    verdicts: BufWriter<File>,
    forwarded: BufWriter<File>,
    frames: BufWriter<File>,
    events: BufWriter<File>,
}

impl Logs {
    fn create(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        Ok(Logs {
            verdicts: open(VERDICT_LOG)?,
            forwarded: open(FORWARD_LOG)?,
            frames: open(FRAME_LOG)?,
            events: open(EVENT_LOG)?,
        })
    }

    fn line<T: Serialize>(w: &mut BufWriter<File>, rec: &T) {
        let r = serde_json::to_writer(&mut *w, rec).map_err(io::Error::from).and_then(|_| w.write_all(b"\n"));
        if let Err(e) = r {
            log::error!("log write failed: {e}");
        }
    }

    fn frame(&mut self, t: Duration, dir: Direction, bytes: &[u8]) {
        Self::line(&mut self.frames, &FrameRecord { t_us: t.as_micros() as u64, dir, hex: hex::encode(bytes) });
    }

    fn flush(&mut self) {
        for w in [&mut self.verdicts, &mut self.forwarded, &mut self.frames, &mut self.events] {
            if let Err(e) = w.flush() {
                log::error!("log flush failed: {e}");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Partition loops
// ---------------------------------------------------------------------------

fn send_downlink(sock: &UdpSocket, gcs: Option<SocketAddr>, frame: &[u8], stats: &mut GatewayStats) {
    match gcs {
        None => stats.downlink_unrouted += 1,
        Some(addr) => match sock.send_to(frame, addr) {
            Ok(_) => stats.downlink_sent += 1,
            Err(e) => {
                stats.socket_errors += 1;
                log::warn!("net-ingress: send to {addr} failed: {e}");
            }
        },
    }
}

fn drain_downlink(sock: &UdpSocket, gcs: Option<SocketAddr>, down: &mut Consumer, stats: &mut GatewayStats) -> bool {
    let mut any = false;
    for _ in 0..POP_BATCH {
        if down.pop_with(|f| send_downlink(sock, gcs, f, stats)).is_none() {
            break;
        }
        any = true;
    }
    any
}

struct NetIngress {
    sock: UdpSocket,
    up: Producer,
    down: Consumer,
    backoff: Backoff,
    shutdown: Arc<AtomicBool>,
    progress: Arc<Progress>,
    stats: GatewayStats,
    gcs: Option<SocketAddr>,
}

impl NetIngress {
    fn push_frame(&mut self, frame: &[u8]) {
        let mut wait = self.backoff.clone();
        loop {
            match self.up.push(frame) {
                Ok(()) => {
                    self.stats.uplink_frames += 1;
                    return;
                }
                Err(PushError::Full) => {
                    self.stats.ring_full_waits += 1;
                    // keep the downlink moving so the trusted side never blocks on us
                    drain_downlink(&self.sock, self.gcs, &mut self.down, &mut self.stats);
                    if self.shutdown.load(Ordering::Acquire) || !self.up.consumer_alive() {
                        self.stats.uplink_frames += 1;
                        self.progress.uplink_done.fetch_add(1, Ordering::Release);
                        return;
                    }
                    wait.wait();
                }
                Err(PushError::FrameTooLarge { len, slot_size }) => {
                    log::warn!("net-ingress: dropping {len}-byte frame (slot size {slot_size})");
                    self.stats.uplink_frames += 1;
                    self.stats.oversize_dropped += 1;
                    self.progress.uplink_done.fetch_add(1, Ordering::Release);
                    return;
                }
            }
        }
    }

    fn run(mut self) -> GatewayStats {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut backoff = self.backoff.clone();
        while !self.shutdown.load(Ordering::Acquire) {
            let mut busy = false;
            for _ in 0..RECV_BATCH {
                match self.sock.recv_from(&mut buf) {
                    Ok((n, from)) => {
                        busy = true;
                        if self.gcs != Some(from) {
                            log::info!("net-ingress: ground station at {from}");
                            self.gcs = Some(from);
                        }
                        self.stats.uplink_datagrams += 1;
                        let mut scanner = FrameScanner::new(&buf[..n]);
                        for item in scanner.by_ref() {
                            self.push_frame(item.bytes());
                        }
                        self.stats.malformed += scanner.junk_runs() as u64;
                        self.stats.junk_bytes += scanner.junk_bytes() as u64;
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                    Err(e) => {
                        self.stats.socket_errors += 1;
                        log::warn!("net-ingress: recv failed: {e}");
                        break;
                    }
                }
            }
            busy |= drain_downlink(&self.sock, self.gcs, &mut self.down, &mut self.stats);
            if busy {
                backoff.reset();
            } else {
                backoff.wait();
            }
        }
        self.stats
    }
}

struct FcsIngress {
    sock: UdpSocket,
    fcs: SocketAddr,
    down: Producer,
    monitor: Monitor,
    feedback: FeedbackConfig,
    feedback_seq: u8,
    backoff: Backoff,
    shutdown: Arc<AtomicBool>,
    progress: Arc<Progress>,
    epoch: Instant,
    logs: Option<Logs>,
    report: GatewayReport,
    next_frame: u64,
}

impl FcsIngress {
    fn push_downlink(&mut self, frame: &[u8]) -> bool {
        match self.down.push(frame) {
            Ok(()) => true,
            Err(_) => {
                self.report.stats.downlink_dropped += 1;
                false
            }
        }
    }

    fn record_verdict(&mut self, index: u64, bytes: &[u8], verdict: &Verdict, msg: Option<&MavMessage>) {
        let n = bytes.len();
        let rec = VerdictRecord {
            frame: index,
            timestamp_us: verdict.timestamp.as_micros() as u64,
            msgid: u32::from_le_bytes([bytes[7], bytes[8], bytes[9], 0]),
            msg: msg.map(|m| m.kind().name().to_string()),
            seq: bytes[4],
            checksum: u16::from_le_bytes([bytes[n - 2], bytes[n - 1]]),
            decision: verdict.decision,
            rule: verdict.rule.clone(),
            reason: verdict.reason.clone(),
        };
        if let Some(l) = &mut self.logs {
            Logs::line(&mut l.verdicts, &rec);
        }
        self.report.verdicts.push(rec);
    }

    fn forward(&mut self, index: u64, bytes: &[u8], now: Duration) {
        match self.sock.send_to(bytes, self.fcs) {
            Ok(_) => {
                let n = bytes.len();
                let rec = ForwardRecord {
                    frame: index,
                    timestamp_us: now.as_micros() as u64,
                    msgid: u32::from_le_bytes([bytes[7], bytes[8], bytes[9], 0]),
                    seq: bytes[4],
                    checksum: u16::from_le_bytes([bytes[n - 2], bytes[n - 1]]),
                    len: n,
                };
                if let Some(l) = &mut self.logs {
                    Logs::line(&mut l.forwarded, &rec);
                }
                self.report.forwarded.push(rec);
                self.report.stats.forwarded += 1;
                self.progress.forwarded.fetch_add(1, Ordering::Release);
            }
            Err(e) => {
                self.report.stats.socket_errors += 1;
                log::warn!("fcs-ingress: send to {} failed: {e}", self.fcs);
            }
        }
    }

    fn handle_uplink(&mut self, bytes: &[u8]) {
        let index = self.next_frame;
        self.next_frame += 1;
        let now = self.epoch.elapsed();
        if let Some(l) = &mut self.logs {
            l.frame(now, Direction::Up, bytes);
        }
        let (verdict, msg) = match frame_decode(bytes) {
            Ok(d) if d.consumed == bytes.len() => {
                let v = self.monitor.attest_at(&d.message, now);
                (v, Some(d.message))
            }
            Err(DecodeError::UnknownMsgId { msgid, consumed }) if consumed == bytes.len() => {
                (self.monitor.attest_opaque_at(msgid, now), None)
            }
            other => {
                self.report.stats.integrity_alarms += 1;
                log::error!("fcs-ingress: frame {index} failed trusted-side decode: {other:?}");
                self.progress.uplink_done.fetch_add(1, Ordering::Release);
                return;
            }
        };
        for ev in self.monitor.drain_expired() {
            self.report.stats.sessions_expired += 1;
            if let Some(l) = &mut self.logs {
                Logs::line(&mut l.events, &ev);
            }
            self.report.expired.push(ev);
        }
        self.record_verdict(index, bytes, &verdict, msg.as_ref());
        if verdict.is_accept() {
            self.report.stats.accepted += 1;
            self.forward(index, bytes, now);
        } else {
            self.report.stats.rejected += 1;
            log::info!(
                "rejected frame {index} ({}): {} [{}]",
                msg.as_ref().map_or("opaque", |m| m.kind().name()),
                verdict.reason,
                verdict.rule.as_deref().unwrap_or("-")
            );
            if let Some(m) = &msg {
                self.send_feedback(m, &verdict, (bytes[5], bytes[6]));
            }
        }
        self.progress.uplink_done.fetch_add(1, Ordering::Release);
    }

    fn send_feedback(&mut self, msg: &MavMessage, verdict: &Verdict, sender: (u8, u8)) {
        if matches!(msg, MavMessage::CommandLong(_)) && !self.feedback.command_ack {
            return;
        }
        let Some(reply) = rejection_feedback(msg, verdict, sender, self.feedback.statustext) else {
            return;
        };
        let frame = frame_encode(&reply, self.feedback_seq, self.feedback.sysid, self.feedback.compid);
        self.feedback_seq = self.feedback_seq.wrapping_add(1);
        if self.push_downlink(&frame) {
            self.report.stats.feedback_sent += 1;
        }
    }

    fn handle_fcs_datagram(&mut self, data: &[u8]) {
        self.report.stats.downlink_datagrams += 1;
        let now = self.epoch.elapsed();
        for item in FrameScanner::new(data) {
            if let Scanned::Message { message, .. } = &item {
                self.monitor.observe_at(message, now);
            }
            if let Some(l) = &mut self.logs {
                l.frame(now, Direction::Down, item.bytes());
            }
            self.report.stats.downlink_frames += 1;
            self.push_downlink(item.bytes());
        }
    }

    fn run(mut self, mut up: Consumer) -> GatewayReport {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut backoff = self.backoff.clone();
        loop {
            let mut busy = false;
            for _ in 0..POP_BATCH {
                if up.pop_with(|f| self.handle_uplink(f)).is_none() {
                    break;
                }
                busy = true;
            }
            for _ in 0..RECV_BATCH {
                match self.sock.recv_from(&mut buf) {
                    Ok((n, _)) => {
                        busy = true;
                        self.handle_fcs_datagram(&buf[..n]);
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                    Err(e) => {
                        // ICMP port unreachable from a not-yet-started FCS shows up here
                        if e.kind() != io::ErrorKind::ConnectionRefused {
                            self.report.stats.socket_errors += 1;
                            log::warn!("fcs-ingress: recv failed: {e}");
                        }
                        break;
                    }
                }
            }
            if busy {
                backoff.reset();
            } else if self.shutdown.load(Ordering::Acquire) {
                break;
            } else {
                backoff.wait();
            }
        }
        if let Some(l) = &mut self.logs {
            l.flush();
        }
        for it in &self.monitor.spec().iterations {
            if let Some(s) = self.monitor.session(&it.name) {
                self.report.sessions.insert(it.name.clone(), s.status);
            }
        }
        self.report
    }
}

fn run_passthrough(
    gcs_sock: UdpSocket,
    fcs_sock: UdpSocket,
    fcs: SocketAddr,
    mut backoff: Backoff,
    shutdown: Arc<AtomicBool>,
    progress: Arc<Progress>,
) -> GatewayReport {
    let mut report = GatewayReport { mode: GatewayMode::Passthrough, ..Default::default() };
    let stats = &mut report.stats;
    let mut buf = vec![0u8; MAX_DATAGRAM];
    let mut gcs: Option<SocketAddr> = None;
    while !shutdown.load(Ordering::Acquire) {
        let mut busy = false;
        for _ in 0..RECV_BATCH {
            match gcs_sock.recv_from(&mut buf) {
                Ok((n, from)) => {
                    busy = true;
                    gcs = Some(from);
                    stats.uplink_datagrams += 1;
                    if fcs_sock.send_to(&buf[..n], fcs).is_ok() {
                        stats.forwarded += 1;
                        progress.forwarded.fetch_add(1, Ordering::Release);
                    } else {
                        stats.socket_errors += 1;
                    }
                    progress.uplink_done.fetch_add(1, Ordering::Release);
                }
                Err(_) => break,
            }
        }
        for _ in 0..RECV_BATCH {
            match fcs_sock.recv_from(&mut buf) {
                Ok((n, _)) => {
                    busy = true;
                    stats.downlink_datagrams += 1;
                    send_downlink(&gcs_sock, gcs, &buf[..n], stats);
                }
                Err(_) => break,
            }
        }
        if busy {
            backoff.reset();
        } else {
            backoff.wait();
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Handle
// ---------------------------------------------------------------------------

enum Workers {
    Passthrough(JoinHandle<GatewayReport>),
    Partitioned { net: JoinHandle<GatewayStats>, fcs: JoinHandle<GatewayReport> },
}

/// A running gateway. Dropping it without [`stop`](Self::stop) leaves the
/// threads running until process exit.
pub struct Gateway {
    mode: GatewayMode,
    gcs_addr: SocketAddr,
    fcs_local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    progress: Arc<Progress>,
    workers: Workers,
    log_dir: Option<PathBuf>,
}

impl Gateway {
    /// Binds both sockets and starts the partitions. `spec` is enforced only
    /// in [`GatewayMode::GatewaySpec`].
    pub fn start(config: &GatewayConfig, spec: Arc<ProtocolSpec>) -> Result<Gateway, GatewayError> {
        let gcs_sock = UdpSocket::bind(config.gcs_listen)?;
        let fcs_sock = UdpSocket::bind(config.fcs_bind)?;
        gcs_sock.set_nonblocking(true)?;
        fcs_sock.set_nonblocking(true)?;
        let gcs_addr = gcs_sock.local_addr()?;
        let fcs_local_addr = fcs_sock.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let progress = Arc::new(Progress::default());
        let backoff = config.ring.backoff();

        let workers = if config.mode == GatewayMode::Passthrough {
            let (sd, pr, fcs) = (shutdown.clone(), progress.clone(), config.fcs_target);
            Workers::Passthrough(
                thread::Builder::new()
                    .name("passthrough".into())
                    .spawn(move || run_passthrough(gcs_sock, fcs_sock, fcs, backoff, sd, pr))?,
            )
        } else {
            let spec = match config.mode {
                GatewayMode::GatewaySpec => spec,
                _ => Arc::new(ProtocolSpec::default()),
            };
            let (up_tx, up_rx) = ring::channel(config.ring.capacity, config.ring.slot_size)?;
            let (down_tx, down_rx) = ring::channel(config.ring.capacity, config.ring.slot_size)?;
            let logs = match &config.log_dir {
                Some(dir) => Some(Logs::create(dir)?),
                None => None,
            };
            let net = NetIngress {
                sock: gcs_sock,
                up: up_tx,
                down: down_rx,
                backoff: backoff.clone(),
                shutdown: shutdown.clone(),
                progress: progress.clone(),
                stats: GatewayStats::default(),
                gcs: None,
            };
            let fcs = FcsIngress {
                sock: fcs_sock,
                fcs: config.fcs_target,
                down: down_tx,
                monitor: Monitor::new(spec, config.monitor_config()),
                feedback: config.feedback.clone(),
                feedback_seq: 0,
                backoff,
                shutdown: shutdown.clone(),
                progress: progress.clone(),
                epoch: Instant::now(),
                logs,
                report: GatewayReport { mode: config.mode, ..Default::default() },
                next_frame: 0,
            };
            Workers::Partitioned {
                net: thread::Builder::new().name("net-ingress".into()).spawn(move || net.run())?,
                fcs: thread::Builder::new().name("fcs-ingress".into()).spawn(move || fcs.run(up_rx))?,
            }
        };
        log::info!("{} gateway: GCS side {gcs_addr}, FCS side {fcs_local_addr} -> {}", config.mode, config.fcs_target);
        Ok(Gateway {
            mode: config.mode,
            gcs_addr,
            fcs_local_addr,
            shutdown,
            progress,
            workers,
            log_dir: config.log_dir.clone(),
        })
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    /// Address the GCS should send to.
    pub fn gcs_addr(&self) -> SocketAddr {
        self.gcs_addr
    }

    /// Address the FCS should send telemetry to.
    pub fn fcs_local_addr(&self) -> SocketAddr {
        self.fcs_local_addr
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    /// Flag that stops the gateway when set; suitable for signal handlers.
    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// Signals shutdown, joins the partitions and writes the counters file.
    pub fn stop(self) -> GatewayReport {
        self.shutdown.store(true, Ordering::Release);
        let report = match self.workers {
            Workers::Passthrough(h) => h.join().expect("passthrough thread panicked"),
            Workers::Partitioned { net, fcs } => {
                let net_stats = net.join().expect("net-ingress thread panicked");
                let mut report = fcs.join().expect("fcs-ingress thread panicked");
                report.stats.merge(&net_stats);
                report
            }
        };
        if let Some(dir) = &self.log_dir {
            let r = std::fs::create_dir_all(dir).and_then(|_| {
                let f = File::create(dir.join(COUNTERS_FILE))?;
                serde_json::to_writer_pretty(f, &report.stats).map_err(io::Error::from)
            });
            if let Err(e) = r {
                log::error!("writing counters: {e}");
            }
        }
        report
    }
}

/// Reads a frame log written by a running gateway.
pub fn read_frame_log(path: &Path) -> io::Result<Vec<(Duration, Direction, Vec<u8>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |e: String| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1));
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let bytes = hex::decode(&rec.hex).map_err(|e| bad(e.to_string()))?;
        out.push((Duration::from_micros(rec.t_us), rec.dir, bytes));
    }
    Ok(out)
}
