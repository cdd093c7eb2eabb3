//! Scripted ground station and flight controller simulators, the scenario
//! runner and the configuration matrix.
//!
//! A scenario is played in scenario time, compressed by `time_scale` in wall
//! time, so a 100 s mission at the default scale of 0.01 runs in about one
//! second. Latency is measured with a monotonic clock from the GCS send call
//! to the FCS receive call.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestor::{Decision, SessionStatus, MAV_RESULT_DENIED};
use crate::codec::*;
use crate::dsl::ProtocolSpec;
use crate::gateway::{Gateway, GatewayConfig, GatewayError, GatewayMode, GatewayReport, GatewayStats};
use crate::state::{FlightMode, MODE_FLAG_SAFETY_ARMED};

pub const GCS_SYSID: u8 = 255;
pub const GCS_COMPID: u8 = 190;
pub const FCS_SYSID: u8 = 1;
pub const FCS_COMPID: u8 = 1;

const HELLO_PERIOD: Duration = Duration::from_millis(10);
const HELLO_TIMEOUT: Duration = Duration::from_secs(5);
const SETTLE_TIMEOUT: Duration = Duration::from_secs(10);

/// Scenario files shipped with the crate.
pub const BUILTIN_SCENARIOS: [(&str, &str); 4] = [
    ("benign_mission_25", include_str!("../../../scenarios/benign_mission_25.json")),
    ("attack_inaccurate_bounds", include_str!("../../../scenarios/attack_inaccurate_bounds.json")),
    ("attack_parachute", include_str!("../../../scenarios/attack_parachute.json")),
    ("attack_mission_overflow", include_str!("../../../scenarios/attack_mission_overflow.json")),
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("scenario {name}: {msg}")]
    Scenario { name: String, msg: String },
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no latency samples")]
    EmptySamples,
    #[error("scenario {0} timed out")]
    Timeout(String),
    #[error("no downlink traffic reached the ground station within {0:?}")]
    NoDownlink(Duration),
}

// ---------------------------------------------------------------------------
// Scenario model
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    /// Delay after the previous step, in scenario milliseconds.
    pub delay_ms: f64,
    pub message: MavMessage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase {
    /// Scenario milliseconds; the last phase lasts until the run ends.
    pub duration_ms: f64,
    pub armed: bool,
    pub mode: String,
    /// Altitude above home at the start of the phase.
    pub altitude_m: f64,
    pub climb_rate_mps: f64,
}

impl Default for Phase {
    fn default() -> Self {
        Phase { duration_ms: 0.0, armed: false, mode: "STABILIZE".into(), altitude_m: 0.0, climb_rate_mps: 0.0 }
    }
}

impl Phase {
    fn flight_mode(&self) -> Option<FlightMode> {
        FlightMode::from_name(&self.mode).or_else(|| self.mode.parse().ok().map(FlightMode))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcsScript {
    pub phases: Vec<Phase>,
    /// Reply to commands, parameter sets and completed uploads.
    pub auto_ack: bool,
    /// HEARTBEAT + GLOBAL_POSITION_INT pairs per scenario second.
    pub telemetry_hz: f64,
}

impl Default for FcsScript {
    fn default() -> Self {
        FcsScript { phases: Vec::new(), auto_ack: true, telemetry_hz: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    /// Index into `gcs_script`.
    pub index: usize,
    pub verdict: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub time_scale: f64,
    /// Uplink padding rate (alternating HEARTBEAT and GLOBAL_POSITION_INT)
    /// in scenario Hz; 0 disables padding.
    pub padding_hz: f64,
    /// Minimum number of uplink messages, reached by padding.
    pub message_volume: usize,
    pub seed: u64,
    pub gcs_script: Vec<ScriptStep>,
    pub fcs_script: FcsScript,
    pub expected: Vec<Expectation>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: String::new(),
            description: String::new(),
            time_scale: 0.01,
            padding_hz: 50.0,
            message_volume: 0,
            seed: 0,
            gcs_script: Vec::new(),
            fcs_script: FcsScript::default(),
            expected: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, HarnessError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// A shipped scenario by name.
    pub fn builtin(name: &str) -> Option<Scenario> {
        BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Scenario::from_json(text).expect("shipped scenario is valid"))
    }

    pub fn builtin_all() -> Vec<Scenario> {
        BUILTIN_SCENARIOS.iter().map(|(n, _)| Self::builtin(n).unwrap()).collect()
    }

    fn err(&self, msg: impl Into<String>) -> HarnessError {
        HarnessError::Scenario { name: self.name.clone(), msg: msg.into() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(self.err("time_scale must be positive"));
        }
        if !(self.padding_hz.is_finite() && self.padding_hz >= 0.0) {
            return Err(self.err("padding_hz must be >= 0"));
        }
        if !(self.fcs_script.telemetry_hz.is_finite() && self.fcs_script.telemetry_hz > 0.0) {
            return Err(self.err("telemetry_hz must be positive"));
        }
        if self.message_volume > self.gcs_script.len() && self.padding_hz == 0.0 {
            return Err(self.err("message_volume needs padding_hz > 0"));
        }
        for (i, step) in self.gcs_script.iter().enumerate() {
            if !(step.delay_ms.is_finite() && step.delay_ms >= 0.0) {
                return Err(self.err(format!("gcs_script[{i}]: delay must be >= 0")));
            }
        }
        for (i, p) in self.fcs_script.phases.iter().enumerate() {
            if !(p.duration_ms.is_finite() && p.duration_ms >= 0.0) {
                return Err(self.err(format!("phase {i}: duration must be >= 0")));
            }
            if p.flight_mode().is_none() {
                return Err(self.err(format!("phase {i}: unknown mode {}", p.mode)));
            }
        }
        for e in &self.expected {
            if e.index >= self.gcs_script.len() {
                return Err(self.err(format!("expected index {} outside script", e.index)));
            }
        }
        Ok(())
    }

    /// True if any scripted message is expected to be rejected.
    pub fn is_attack(&self) -> bool {
        self.expected.iter().any(|e| e.verdict == Decision::Reject)
    }

    /// Telemetry phase at scenario time `t_ms`.
    pub fn phase_at(&self, t_ms: f64) -> Option<(&Phase, f64)> {
        let mut start = 0.0;
        let last = self.fcs_script.phases.len().checked_sub(1)?;
        for (i, p) in self.fcs_script.phases.iter().enumerate() {
            if i == last || t_ms < start + p.duration_ms {
                return Some((p, (t_ms - start).max(0.0)));
            }
            start += p.duration_ms;
        }
        None
    }
}

/// One uplink message in send order.
#[derive(Clone, Debug, PartialEq)]
pub struct Planned {
    pub at_ms: f64,
    pub message: MavMessage,
    pub script_index: Option<usize>,
}

/// Merges the script with periodic padding. Padding content depends only on
/// the scenario seed.
pub fn plan_uplink(s: &Scenario) -> Vec<Planned> {
    let mut t = 0.0;
    let mut plan: Vec<Planned> = s
        .gcs_script
        .iter()
        .enumerate()
        .map(|(i, step)| {
            t += step.delay_ms;
            Planned { at_ms: t, message: step.message.clone(), script_index: Some(i) }
        })
        .collect();
    let script_end = t;
    if s.padding_hz > 0.0 {
        let mut rng = StdRng::seed_from_u64(s.seed);
        let period = 1000.0 / s.padding_hz;
        let mut k = 0u64;
        loop {
            let at = k as f64 * period;
            if at > script_end && plan.len() >= s.message_volume {
                break;
            }
            plan.push(Planned { at_ms: at, message: padding_message(k, &mut rng), script_index: None });
            k += 1;
        }
    }
    // stable: scripted steps stay ahead of padding at equal times
    plan.sort_by(|a, b| a.at_ms.total_cmp(&b.at_ms).then(b.script_index.is_some().cmp(&a.script_index.is_some())));
    plan
}

fn padding_message(k: u64, rng: &mut StdRng) -> MavMessage {
    if k.is_multiple_of(2) {
        MavMessage::Heartbeat(Heartbeat { mav_type: 6, autopilot: 8, mavlink_version: 3, ..Default::default() })
    } else {
        // ground station position, as sent for follow-me
        MavMessage::GlobalPositionInt(GlobalPositionInt {
            time_boot_ms: (k * 20) as u32,
            lat: -353_632_620 + rng.gen_range(-50..=50),
            lon: 1_491_652_370 + rng.gen_range(-50..=50),
            alt: 584_000 + rng.gen_range(-200..=200),
            relative_alt: rng.gen_range(-200..=200),
            hdg: u16::MAX,
            ..Default::default()
        })
    }
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_ms: f64,
    pub sd_ms: f64,
    pub ci95_ms: f64,
    pub median_ms: f64,
}

impl fmt::Display for LatencyStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean_ms, self.ci95_ms)
    }
}

/// Mean, sample standard deviation and 95% confidence half-width of
/// microsecond samples, reported in milliseconds.
pub fn latency_stats(samples_us: &[u64]) -> Result<LatencyStats, HarnessError> {
    let n = samples_us.len();
    if n == 0 {
        return Err(HarnessError::EmptySamples);
    }
    let ms: Vec<f64> = samples_us.iter().map(|&us| us as f64 / 1000.0).collect();
    let mean = ms.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(LatencyStats { n, mean_ms: mean, sd_ms: sd, ci95_ms: 1.96 * sd / (n as f64).sqrt(), median_ms: median(&ms) })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

// ---------------------------------------------------------------------------
// Simulators
// ---------------------------------------------------------------------------

struct Sent {
    at: Instant,
    bytes: Vec<u8>,
    script_index: Option<usize>,
    hello: bool,
}

struct GcsLog {
    sent: Vec<Sent>,
    downlink: Vec<MavMessage>,
}

struct FcsLog {
    received: Vec<(Instant, Vec<u8>)>,
    telemetry_sent: u64,
}

fn gcs_receiver(sock: UdpSocket, stop: Arc<AtomicBool>, count: Arc<AtomicU64>) -> Vec<MavMessage> {
    let mut buf = vec![0u8; 65_536];
    let mut out = Vec::new();
    sock.set_read_timeout(Some(Duration::from_millis(5))).ok();
    while !stop.load(Ordering::Acquire) {
        if let Ok(n) = sock.recv(&mut buf) {
            count.fetch_add(1, Ordering::Release);
            for item in FrameScanner::new(&buf[..n]) {
                if let Scanned::Message { message, .. } = item {
                    out.push(message);
                }
            }
        }
    }
    out
}

fn run_gcs(
    scenario: &Scenario,
    plan: &[Planned],
    gateway: SocketAddr,
    script_start: &OnceLock<Instant>,
) -> Result<GcsLog, HarnessError> {
    let sock = UdpSocket::bind(("127.0.0.1", 0))?;
    sock.connect(gateway)?;
    let stop = Arc::new(AtomicBool::new(false));
    let heard = Arc::new(AtomicU64::new(0));
    let rx = {
        let (sock, stop, heard) = (sock.try_clone()?, stop.clone(), heard.clone());
        thread::Builder::new().name("gcs-rx".into()).spawn(move || gcs_receiver(sock, stop, heard))?
    };
    let mut seq = 0u8;
    let mut sent = Vec::with_capacity(plan.len() + 16);
    let mut send = |msg: &MavMessage, script_index, hello| -> io::Result<()> {
        let bytes = frame_encode(msg, seq, GCS_SYSID, GCS_COMPID);
        seq = seq.wrapping_add(1);
        let at = Instant::now();
        sock.send(&bytes)?;
        sent.push(Sent { at, bytes, script_index, hello });
        Ok(())
    };

    // announce ourselves until the vehicle's telemetry comes back
    let hello =
        MavMessage::Heartbeat(Heartbeat { mav_type: 6, autopilot: 8, mavlink_version: 3, ..Default::default() });
    let deadline = Instant::now() + HELLO_TIMEOUT;
    let result = loop {
        if heard.load(Ordering::Acquire) > 0 {
            break Ok(());
        }
        if Instant::now() > deadline {
            break Err(HarnessError::NoDownlink(HELLO_TIMEOUT));
        }
        send(&hello, None, true)?;
        thread::sleep(HELLO_PERIOD);
    };
    if result.is_ok() {
        let start = *script_start.get_or_init(Instant::now);
        for p in plan {
            let due = start + Duration::from_secs_f64(p.at_ms * scenario.time_scale / 1000.0);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
            send(&p.message, p.script_index, false)?;
        }
    }
    // let late acknowledgements arrive before closing the receiver
    thread::sleep(Duration::from_millis(20));
    stop.store(true, Ordering::Release);
    let downlink = rx.join().expect("gcs receiver panicked");
    result.map(|_| GcsLog { sent, downlink })
}

struct FcsSim {
    sock: UdpSocket,
    gateway: SocketAddr,
    scenario: Scenario,
    script_start: Arc<OnceLock<Instant>>,
    stop: Arc<AtomicBool>,
}

impl FcsSim {
    fn telemetry(&self, boot: Instant, seq: &mut u8) -> Vec<u8> {
        let t_ms = match self.script_start.get() {
            Some(start) => start.elapsed().as_secs_f64() * 1000.0 / self.scenario.time_scale,
            None => 0.0,
        };
        let default = Phase::default();
        let (phase, dt_ms) = self.scenario.phase_at(t_ms).unwrap_or((&default, 0.0));
        let mode = phase.flight_mode().unwrap_or_default();
        let altitude = phase.altitude_m + phase.climb_rate_mps * dt_ms / 1000.0;
        let hb = MavMessage::Heartbeat(Heartbeat {
            mav_type: 2,
            autopilot: 3,
            base_mode: 0x01 | if phase.armed { MODE_FLAG_SAFETY_ARMED } else { 0 },
            custom_mode: mode.0,
            system_status: if phase.armed { 4 } else { 3 },
            mavlink_version: 3,
        });
        let pos = MavMessage::GlobalPositionInt(GlobalPositionInt {
            time_boot_ms: boot.elapsed().as_millis() as u32,
            lat: -353_632_620,
            lon: 1_491_652_370,
            alt: 584_000 + (altitude * 1000.0) as i32,
            relative_alt: (altitude * 1000.0) as i32,
            vz: (-phase.climb_rate_mps * 100.0).round() as i16,
            hdg: 0,
            ..Default::default()
        });
        let mut out = Vec::new();
        for m in [hb, pos] {
            encode_into(&m, *seq, FCS_SYSID, FCS_COMPID, &mut out);
            *seq = seq.wrapping_add(1);
        }
        out
    }

    fn reply(msg: &MavMessage, mission_len: &mut u16) -> Option<MavMessage> {
        match msg {
            MavMessage::CommandLong(c) => Some(MavMessage::CommandAck(CommandAck {
                command: c.command,
                result: 0,
                target_system: GCS_SYSID,
                target_component: GCS_COMPID,
                ..Default::default()
            })),
            MavMessage::ParamSet(p) => Some(MavMessage::ParamValue(ParamValue {
                param_id: p.param_id,
                param_value: p.param_value,
                param_type: p.param_type,
                param_count: 1,
                param_index: u16::MAX,
            })),
            MavMessage::MissionCount(c) => {
                *mission_len = c.count;
                (c.count == 0).then(|| {
                    MavMessage::MissionAck(MissionAck {
                        target_system: GCS_SYSID,
                        target_component: GCS_COMPID,
                        ..Default::default()
                    })
                })
            }
            MavMessage::MissionItemInt(i) if *mission_len > 0 && i.seq + 1 == *mission_len => {
                Some(MavMessage::MissionAck(MissionAck {
                    target_system: GCS_SYSID,
                    target_component: GCS_COMPID,
                    ..Default::default()
                }))
            }
            _ => None,
        }
    }

    fn run(self) -> FcsLog {
        let boot = Instant::now();
        let period = Duration::from_secs_f64(self.scenario.time_scale / self.scenario.fcs_script.telemetry_hz)
            .max(Duration::from_millis(1));
        let mut next_telemetry = boot;
        let mut buf = vec![0u8; 65_536];
        let mut log = FcsLog { received: Vec::new(), telemetry_sent: 0 };
        let mut seq = 0u8;
        let mut mission_len = 0u16;
        while !self.stop.load(Ordering::Acquire) {
            let now = Instant::now();
            if now >= next_telemetry {
                let data = self.telemetry(boot, &mut seq);
                if self.sock.send_to(&data, self.gateway).is_ok() {
                    log.telemetry_sent += 1;
                }
                next_telemetry += period;
                if next_telemetry < now {
                    next_telemetry = now + period;
                }
            }
            let wait = next_telemetry.saturating_duration_since(Instant::now()).max(Duration::from_micros(100));
            self.sock.set_read_timeout(Some(wait)).ok();
            let Ok((n, _)) = self.sock.recv_from(&mut buf) else {
                continue;
            };
            let at = Instant::now();
            for item in FrameScanner::new(&buf[..n]) {
                log.received.push((at, item.bytes().to_vec()));
                if !self.scenario.fcs_script.auto_ack {
                    continue;
                }
                if let Scanned::Message { message, .. } = &item {
                    if let Some(r) = Self::reply(message, &mut mission_len) {
                        let bytes = frame_encode(&r, seq, FCS_SYSID, FCS_COMPID);
                        seq = seq.wrapping_add(1);
                        let _ = self.sock.send_to(&bytes, self.gateway);
                    }
                }
            }
        }
        log
    }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Mode, ring, feedback and monitor settings. Socket addresses are
    /// replaced by loopback ephemeral ports.
    pub gateway: GatewayConfig,
    /// Wall-clock cap for one scenario.
    pub timeout: Duration,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(mode: GatewayMode) -> Self {
        RunConfig {
            gateway: GatewayConfig { mode, ..Default::default() },
            timeout: Duration::from_secs(120),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageOutcome {
    pub index: usize,
    pub msg: String,
    /// None when the configuration has no monitor.
    pub verdict: Option<Decision>,
    pub rule: Option<String>,
    pub reason: Option<String>,
    pub forwarded: bool,
    pub latency_us: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub index: usize,
    pub expected: Decision,
    pub expected_rule: Option<String>,
    pub actual: Option<Decision>,
    pub actual_rule: Option<String>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: GatewayMode,
    pub seed: u64,
    /// Every uplink message the GCS sent, greeting heartbeats included.
    pub sent: u64,
    /// Uplink frames that reached the FCS.
    pub forwarded: u64,
    pub rejected: u64,
    /// Frames lost in the gateway or never seen by it.
    pub dropped: u64,
    /// `sent == forwarded + rejected + dropped`, with every term counted
    /// independently.
    pub conservation_ok: bool,
    /// The FCS received a subsequence of what was sent, in order.
    pub fifo_ok: bool,
    pub latency: Option<LatencyStats>,
    #[serde(skip)]
    pub latency_samples_us: Vec<u64>,
    pub script: Vec<MessageOutcome>,
    pub assertions: Vec<AssertionResult>,
    pub assertions_ok: bool,
    pub attack: bool,
    pub attack_detected: bool,
    /// COMMAND_ACK(DENIED) frames the GCS received.
    pub denied_acks: u64,
    /// Forwarded frames without an Accept verdict, plus Accept verdicts
    /// never forwarded. None without a monitor.
    pub audit_violations: Option<u64>,
    pub sessions: BTreeMap<String, SessionStatus>,
    pub gateway: GatewayStats,
    pub telemetry_sent: u64,
    pub wall_ms: f64,
    #[serde(skip)]
    pub verdict_sequence: Vec<(u64, Decision, Option<String>)>,
}

impl RunReport {
    pub fn empty(scenario: &Scenario, mode: GatewayMode, seed: u64) -> Self {
        RunReport {
            scenario: scenario.name.clone(),
            mode,
            seed,
            sent: 0,
            forwarded: 0,
            rejected: 0,
            dropped: 0,
            conservation_ok: true,
            fifo_ok: true,
            latency: None,
            latency_samples_us: Vec::new(),
            script: Vec::new(),
            assertions: Vec::new(),
            assertions_ok: true,
            attack: scenario.is_attack(),
            attack_detected: false,
            denied_acks: 0,
            audit_violations: None,
            sessions: BTreeMap::new(),
            gateway: GatewayStats::default(),
            telemetry_sent: 0,
            wall_ms: 0.0,
            verdict_sequence: Vec::new(),
        }
    }

    /// Script indices that were rejected.
    pub fn rejected_indices(&self) -> Vec<usize> {
        self.script.iter().filter(|o| o.verdict == Some(Decision::Reject)).map(|o| o.index).collect()
    }
}

/// Greedy in-order matching of `needles` against `haystack`; returns for
/// each needle the matched haystack index, or None if the needles do not
/// form a subsequence.
fn match_subsequence<'a, T: 'a, U: 'a>(
    haystack: &'a [T],
    needles: &'a [U],
    eq: impl Fn(&T, &U) -> bool,
) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(needles.len());
    let mut j = 0;
    for n in needles {
        while j < haystack.len() && !eq(&haystack[j], n) {
            j += 1;
        }
        if j == haystack.len() {
            return None;
        }
        out.push(j);
        j += 1;
    }
    Some(out)
}

/// Plays one scenario against a gateway in the configured mode.
pub fn run_scenario(scenario: &Scenario, spec: Arc<ProtocolSpec>, cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    scenario.validate()?;
    let mut scenario = scenario.clone();
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    let mode = cfg.gateway.mode;
    let plan = plan_uplink(&scenario);
    if plan.is_empty() {
        return Ok(RunReport::empty(&scenario, mode, scenario.seed));
    }
    let wall = Instant::now();

    let fcs_sock = UdpSocket::bind(("127.0.0.1", 0))?;
    let fcs_addr = fcs_sock.local_addr()?;
    let mut gw_cfg = cfg.gateway.clone();
    gw_cfg.gcs_listen = ([127, 0, 0, 1], 0).into();
    gw_cfg.fcs_bind = ([127, 0, 0, 1], 0).into();
    gw_cfg.fcs_target = fcs_addr;
    let gateway = Gateway::start(&gw_cfg, spec)?;

    let script_start = Arc::new(OnceLock::new());
    let stop = Arc::new(AtomicBool::new(false));
    let fcs = FcsSim {
        sock: fcs_sock,
        gateway: gateway.fcs_local_addr(),
        scenario: scenario.clone(),
        script_start: script_start.clone(),
        stop: stop.clone(),
    };
    let fcs_thread = thread::Builder::new().name("fcs-sim".into()).spawn(move || fcs.run())?;

    let gcs = run_gcs(&scenario, &plan, gateway.gcs_addr(), &script_start);

    // wait for the gateway to finish with everything that was sent
    let sent_total = gcs.as_ref().map_or(0, |g| g.sent.len() as u64);
    let settle = Instant::now();
    let mut timed_out = false;
    while gateway.progress().uplink_done.load(Ordering::Acquire) < sent_total {
        if settle.elapsed() > SETTLE_TIMEOUT.min(cfg.timeout) || wall.elapsed() > cfg.timeout {
            timed_out = true;
            break;
        }
        thread::sleep(Duration::from_millis(1));
    }
    thread::sleep(Duration::from_millis(20));
    stop.store(true, Ordering::Release);
    let fcs_log = fcs_thread.join().expect("fcs simulator panicked");
    let gw = gateway.stop();
    let gcs = gcs?;
    if timed_out {
        return Err(HarnessError::Timeout(scenario.name.clone()));
    }

    let mut report = assemble(&scenario, mode, &gcs, &fcs_log, &gw);
    report.wall_ms = wall.elapsed().as_secs_f64() * 1000.0;
    Ok(report)
}

fn assemble(scenario: &Scenario, mode: GatewayMode, gcs: &GcsLog, fcs: &FcsLog, gw: &GatewayReport) -> RunReport {
    let mut r = RunReport::empty(scenario, mode, scenario.seed);
    r.sent = gcs.sent.len() as u64;
    r.gateway = gw.stats.clone();
    r.sessions = gw.sessions.clone();
    r.telemetry_sent = fcs.telemetry_sent;

    // FCS receipts against sends
    let recv_match = match_subsequence(&gcs.sent, &fcs.received, |s, (_, b)| s.bytes == *b);
    r.fifo_ok = recv_match.is_some();
    let mut forwarded_at: Vec<Option<Instant>> = vec![None; gcs.sent.len()];
    if let Some(m) = &recv_match {
        for (k, &i) in m.iter().enumerate() {
            forwarded_at[i] = Some(fcs.received[k].0);
        }
    }
    r.forwarded = forwarded_at.iter().filter(|x| x.is_some()).count() as u64;

    // verdicts against sends
    let has_monitor = mode != GatewayMode::Passthrough;
    let mut verdict_of: Vec<Option<usize>> = vec![None; gcs.sent.len()];
    if has_monitor {
        let key = |b: &[u8]| (b[4], u16::from_le_bytes([b[b.len() - 2], b[b.len() - 1]]));
        match match_subsequence(&gcs.sent, &gw.verdicts, |s, v| key(&s.bytes) == (v.seq, v.checksum)) {
            Some(m) => {
                for (k, &i) in m.iter().enumerate() {
                    verdict_of[i] = Some(k);
                }
            }
            None => r.fifo_ok = false,
        }
        r.rejected = gw.verdicts.iter().filter(|v| v.decision == Decision::Reject).count() as u64;
        let (extra, missing) = gw.audit();
        r.audit_violations = Some((extra.len() + missing.len()) as u64);
        r.verdict_sequence = gw.verdicts.iter().map(|v| (v.frame, v.decision, v.rule.clone())).collect();
    }

    // independent loss count: never reached the gateway, or lost inside it
    r.dropped = if has_monitor {
        let lost_before = r.sent.saturating_sub(gw.stats.uplink_frames);
        let accepted_not_delivered = gw.stats.accepted.saturating_sub(r.forwarded);
        lost_before + gw.stats.oversize_dropped + gw.stats.integrity_alarms + accepted_not_delivered
    } else {
        r.sent.saturating_sub(gw.stats.uplink_datagrams) + gw.stats.uplink_datagrams.saturating_sub(r.forwarded)
    };
    r.conservation_ok = r.sent == r.forwarded + r.rejected + r.dropped;

    for (i, s) in gcs.sent.iter().enumerate() {
        if let (false, Some(t)) = (s.hello, forwarded_at[i]) {
            r.latency_samples_us.push(t.duration_since(s.at).as_micros() as u64);
        }
    }
    r.latency = latency_stats(&r.latency_samples_us).ok();

    for (i, s) in gcs.sent.iter().enumerate() {
        let Some(index) = s.script_index else { continue };
        let v = verdict_of[i].map(|k| &gw.verdicts[k]);
        r.script.push(MessageOutcome {
            index,
            msg: scenario.gcs_script[index].message.kind().name().to_string(),
            verdict: v.map(|v| v.decision),
            rule: v.and_then(|v| v.rule.clone()),
            reason: v.map(|v| v.reason.clone()),
            forwarded: forwarded_at[i].is_some(),
            latency_us: forwarded_at[i].map(|t| t.duration_since(s.at).as_micros() as u64),
        });
    }
    r.script.sort_by_key(|o| o.index);

    for e in &scenario.expected {
        let o = r.script.iter().find(|o| o.index == e.index);
        let actual = o.and_then(|o| o.verdict);
        let actual_rule = o.and_then(|o| o.rule.clone());
        let verdict_ok = match (e.verdict, o) {
            (Decision::Accept, Some(o)) => o.forwarded && actual != Some(Decision::Reject),
            (Decision::Reject, Some(o)) => !o.forwarded && actual == Some(Decision::Reject),
            (_, None) => false,
        };
        let rule_ok = e.rule.is_none() || e.rule == actual_rule;
        r.assertions.push(AssertionResult {
            index: e.index,
            expected: e.verdict,
            expected_rule: e.rule.clone(),
            actual,
            actual_rule,
            ok: verdict_ok && rule_ok,
        });
    }
    r.assertions_ok = r.assertions.iter().all(|a| a.ok);
    r.attack_detected = r.attack
        && scenario.expected.iter().filter(|e| e.verdict == Decision::Reject).all(|e| {
            r.script.iter().any(|o| o.index == e.index && !o.forwarded && o.verdict == Some(Decision::Reject))
        });
    r.denied_acks =
        gcs.downlink.iter().filter(|m| matches!(m, MavMessage::CommandAck(a) if a.result == MAV_RESULT_DENIED)).count()
            as u64;
    r
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub mode: GatewayMode,
    pub runs: usize,
    pub stats: Option<LatencyStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionCell {
    pub mode: GatewayMode,
    /// Runs in which every expected rejection happened.
    pub detected_runs: usize,
    pub runs: usize,
    pub rejects: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub scenario: String,
    pub attack: bool,
    pub cells: Vec<DetectionCell>,
}

impl DetectionRow {
    pub fn cell(&self, mode: GatewayMode) -> Option<&DetectionCell> {
        self.cells.iter().find(|c| c.mode == mode)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub rounds: usize,
    pub latency: Vec<LatencyRow>,
    pub detection: Vec<DetectionRow>,
    pub runs: Vec<RunReport>,
}

impl MatrixReport {
    pub fn latency_row(&self, mode: GatewayMode) -> Option<&LatencyRow> {
        self.latency.iter().find(|r| r.mode == mode)
    }

    /// Latency per configuration over the benign scenarios.
    pub fn latency_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>6} {:>8} {:>18} {:>11}", "config", "runs", "n", "latency (ms)", "median");
        for row in &self.latency {
            match &row.stats {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        "{:<14} {:>6} {:>8} {:>18} {:>11.3}",
                        row.mode.name(),
                        row.runs,
                        s.n,
                        s.to_string(),
                        s.median_ms
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<14} {:>6} {:>8} {:>18} {:>11}", row.mode.name(), row.runs, 0, "-", "-");
                }
            }
        }
        out
    }

    /// Attack detection per configuration.
    pub fn detection_table(&self) -> String {
        let mut out = String::new();
        let modes: Vec<GatewayMode> = self.latency.iter().map(|r| r.mode).collect();
        let _ = write!(out, "{:<26}", "scenario");
        for m in &modes {
            let _ = write!(out, " {:>14}", m.name());
        }
        out.push('\n');
        for row in &self.detection {
            let _ = write!(out, "{:<26}", row.scenario);
            for m in &modes {
                let text = match row.cell(*m) {
                    None => "-".to_string(),
                    Some(c) if row.attack => {
                        let yes = if c.detected_runs == c.runs { "Yes" } else { "No" };
                        format!("{yes} ({}/{})", c.detected_runs, c.runs)
                    }
                    Some(c) => format!("{} rejects", c.rejects),
                };
                let _ = write!(out, " {text:>14}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every scenario under every mode, `rounds` times, interleaving the
/// modes within each round so slow drifts in machine load hit all of them.
pub fn run_matrix(
    scenarios: &[Scenario],
    spec: Arc<ProtocolSpec>,
    modes: &[GatewayMode],
    rounds: usize,
    base: &RunConfig,
) -> Result<MatrixReport, HarnessError> {
    let mut runs = Vec::new();
    for round in 0..rounds.max(1) {
        for s in scenarios {
            for &mode in modes {
                let mut cfg = base.clone();
                cfg.gateway.mode = mode;
                if let Some(dir) = &base.gateway.log_dir {
                    cfg.gateway.log_dir = Some(dir.join(&s.name).join(mode.name()).join(format!("round-{round}")));
                }
                let r = run_scenario(s, spec.clone(), &cfg)?;
                log::info!(
                    "{} [{}] round {round}: sent {} forwarded {} rejected {}",
                    s.name,
                    mode,
                    r.sent,
                    r.forwarded,
                    r.rejected
                );
                runs.push(r);
            }
        }
    }
    let any_benign = scenarios.iter().any(|s| !s.is_attack());
    let latency = modes
        .iter()
        .map(|&mode| {
            let selected: Vec<&RunReport> =
                runs.iter().filter(|r| r.mode == mode && (!any_benign || !r.attack)).collect();
            let samples: Vec<u64> = selected.iter().flat_map(|r| r.latency_samples_us.iter().copied()).collect();
            LatencyRow { mode, runs: selected.len(), stats: latency_stats(&samples).ok() }
        })
        .collect();
    let detection = scenarios
        .iter()
        .map(|s| DetectionRow {
            scenario: s.name.clone(),
            attack: s.is_attack(),
            cells: modes
                .iter()
                .map(|&mode| {
                    let rs: Vec<&RunReport> = runs.iter().filter(|r| r.scenario == s.name && r.mode == mode).collect();
                    DetectionCell {
                        mode,
                        detected_runs: rs.iter().filter(|r| r.attack_detected).count(),
                        runs: rs.len(),
                        rejects: rs.iter().map(|r| r.rejected).sum(),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(MatrixReport { rounds: rounds.max(1), latency, detection, runs })
}
