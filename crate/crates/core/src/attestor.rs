//! Runtime monitor deciding whether each uplink message may reach the flight
//! control software.
//!
//! Checks run in this order and the first failure rejects:
//!
//! 1. every rule whose trigger pattern matches (first true branch guard
//!    selects the requirement set; no true guard rejects with "no branch");
//! 2. bounded iterations (opening messages and items);
//! 3. static bounds of declared parameters for `PARAM_SET`.
//!
//! State (parameter mirror, sessions) is only updated for accepted messages.
//! Messages that match nothing are accepted unless `default_deny` is set.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize, Serializer};

use crate::codec::{CommandAck, FieldValue, MavMessage, StatusText, StatusTextBuf};
use crate::dsl::{
    eval_expr, reads_telemetry, IterField, IterationDecl, Literal, MsgPattern, PatternItem, ProtocolSpec, Requirement,
    Rule, Scope, Value,
};
use crate::state::VehicleState;

/// `MAV_RESULT_DENIED`
pub const MAV_RESULT_DENIED: u8 = 2;
/// `MAV_SEVERITY_WARNING`
pub const MAV_SEVERITY_WARNING: u8 = 4;

pub const RULE_PARAM_BOUNDS: &str = "param_bounds";
pub const RULE_DEFAULT_DENY: &str = "default_deny";
pub const REASON_NO_SESSION: &str = "no matching session";
pub const REASON_NO_BRANCH: &str = "no branch";
pub const REASON_STALE: &str = "stale state";

#[derive(Clone, Debug)]
pub struct MonitorConfig {
    pub default_deny: bool,
    /// Telemetry older than this makes state-dependent rules reject.
    pub stale_window: Duration,
    /// An uploading session idle for longer than this returns to idle.
    pub session_timeout: Duration,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { default_deny: false, stale_window: Duration::from_secs(5), session_timeout: Duration::from_secs(10) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

fn micros<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_micros() as u64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub decision: Decision,
    pub rule: Option<String>,
    pub reason: String,
    #[serde(rename = "timestamp_us", serialize_with = "micros")]
    pub timestamp: Duration,
}

impl Verdict {
    fn accept(reason: impl Into<String>, rule: Option<&str>, now: Duration) -> Self {
        Verdict { decision: Decision::Accept, rule: rule.map(str::to_string), reason: reason.into(), timestamp: now }
    }

    fn reject(rule: &str, reason: impl Into<String>, now: Duration) -> Self {
        Verdict { decision: Decision::Reject, rule: Some(rule.to_string()), reason: reason.into(), timestamp: now }
    }

    pub fn is_accept(&self) -> bool {
        self.decision == Decision::Accept
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Idle,
    Uploading,
    Complete,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MissionSession {
    pub status: SessionStatus,
    pub expected: u16,
    pub received: BTreeSet<u16>,
    #[serde(serialize_with = "micros")]
    pub opened_at: Duration,
    #[serde(serialize_with = "micros")]
    pub last_activity: Duration,
}

impl MissionSession {
    fn idle() -> Self {
        MissionSession {
            status: SessionStatus::Idle,
            expected: 0,
            received: BTreeSet::new(),
            opened_at: Duration::ZERO,
            last_activity: Duration::ZERO,
        }
    }
}

/// An uploading session dropped back to idle after going quiet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SessionExpired {
    pub iteration: String,
    pub received: usize,
    pub expected: u16,
    #[serde(rename = "timestamp_us", serialize_with = "micros")]
    pub at: Duration,
}

// ---------------------------------------------------------------------------
// Evaluation scope
// ---------------------------------------------------------------------------

struct MsgScope<'a> {
    msg: &'a MavMessage,
    binders: &'a [(String, Value)],
    spec: &'a ProtocolSpec,
    state: &'a VehicleState,
    iter: Option<[f64; 3]>,
}

fn field_value(v: FieldValue) -> Value {
    match v {
        FieldValue::Num(n) => Value::Num(n),
        FieldValue::Text(s) => Value::Str(s),
    }
}

impl Scope for MsgScope<'_> {
    fn var(&self, name: &str) -> Option<Value> {
        self.binders
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .or_else(|| self.spec.constant(name).map(Value::Num))
    }

    fn msg_field(&self, name: &str) -> Option<Value> {
        self.msg.field(name).map(field_value)
    }

    fn state(&self, name: &str) -> Option<Value> {
        self.state.lookup(name)
    }

    fn iter(&self, field: IterField) -> Option<Value> {
        let [index, count, received] = self.iter?;
        Some(Value::Num(match field {
            IterField::Index => index,
            IterField::Count => count,
            IterField::Received => received,
        }))
    }
}

/// Matches `msg` against a pattern, returning the binder values.
pub fn match_pattern(p: &MsgPattern, msg: &MavMessage) -> Option<Vec<(String, Value)>> {
    if p.kind != msg.kind() {
        return None;
    }
    let mut binders = Vec::new();
    for item in &p.items {
        match item {
            PatternItem::Equals { field, value } => {
                let ok = match (msg.field(field)?, value) {
                    (FieldValue::Num(a), Literal::Num(b)) => a == *b,
                    (FieldValue::Text(a), Literal::Str(b)) => a == *b,
                    _ => false,
                };
                if !ok {
                    return None;
                }
            }
            PatternItem::Bind { field, binder } => {
                binders.push((binder.clone(), field_value(msg.field(field)?)));
            }
        }
    }
    Some(binders)
}

enum Check {
    Pass,
    Fail(String),
}

fn check_requirements(reqs: &[Requirement], scope: &MsgScope<'_>) -> Check {
    for req in reqs {
        match eval_expr(&req.expr, scope) {
            Ok(Value::Bool(true)) => {}
            Ok(Value::Bool(false)) => {
                return Check::Fail(req.reason.clone().unwrap_or_else(|| format!("requirement failed: {}", req.expr)))
            }
            Ok(other) => return Check::Fail(format!("evaluation error: requirement produced {}", other.type_name())),
            Err(e) => return Check::Fail(format!("evaluation error: {e}")),
        }
    }
    Check::Pass
}

fn any_reads_telemetry(reqs: &[Requirement]) -> bool {
    reqs.iter().any(|r| reads_telemetry(&r.expr))
}

// ---------------------------------------------------------------------------
// Monitor
// ---------------------------------------------------------------------------

enum SessionUpdate {
    Open { iter: usize, count: u16 },
    Item { iter: usize, index: u16 },
}

#[derive(Clone)]
pub struct Monitor {
    spec: Arc<ProtocolSpec>,
    config: MonitorConfig,
    state: VehicleState,
    sessions: Vec<MissionSession>,
    expired: Vec<SessionExpired>,
    epoch: Instant,
}

impl Monitor {
    pub fn new(spec: Arc<ProtocolSpec>, config: MonitorConfig) -> Self {
        let state = VehicleState::from_spec(&spec);
        let sessions = spec.iterations.iter().map(|_| MissionSession::idle()).collect();
        Monitor { spec, config, state, sessions, expired: Vec::new(), epoch: Instant::now() }
    }

    pub fn spec(&self) -> &ProtocolSpec {
        &self.spec
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    /// Session of the named iteration.
    pub fn session(&self, name: &str) -> Option<&MissionSession> {
        let i = self.spec.iterations.iter().position(|it| it.name == name)?;
        self.sessions.get(i)
    }

    /// Time since construction on the monitor's monotonic clock.
    pub fn now(&self) -> Duration {
        self.epoch.elapsed()
    }

    /// Clears sessions and re-initialises vehicle state from the spec.
    pub fn reset(&mut self) {
        self.state = VehicleState::from_spec(&self.spec);
        self.sessions.iter_mut().for_each(|s| *s = MissionSession::idle());
        self.expired.clear();
    }

    /// Session expiries since the last call.
    pub fn drain_expired(&mut self) -> Vec<SessionExpired> {
        std::mem::take(&mut self.expired)
    }

    pub fn observe(&mut self, msg: &MavMessage) {
        let now = self.now();
        self.observe_at(msg, now);
    }

    /// Feeds downlink telemetry into the state mirror.
    pub fn observe_at(&mut self, msg: &MavMessage, now: Duration) {
        self.state.apply_telemetry(msg, now);
    }

    pub fn attest(&mut self, msg: &MavMessage) -> Verdict {
        let now = self.now();
        self.attest_at(msg, now)
    }

    /// Verdict for an uplink frame whose message id is outside the
    /// supported subset.
    pub fn attest_opaque(&mut self, msgid: u32) -> Verdict {
        let now = self.now();
        self.attest_opaque_at(msgid, now)
    }

    pub fn attest_opaque_at(&mut self, msgid: u32, now: Duration) -> Verdict {
        if self.config.default_deny {
            Verdict::reject(RULE_DEFAULT_DENY, format!("unsupported message id {msgid}"), now)
        } else {
            Verdict::accept("no rule matches", None, now)
        }
    }

    fn expire_sessions(&mut self, now: Duration) {
        for (it, s) in self.spec.iterations.iter().zip(&mut self.sessions) {
            if s.status == SessionStatus::Uploading && now.saturating_sub(s.last_activity) > self.config.session_timeout
            {
                log::info!("{}: session idle, {} of {} items", it.name, s.received.len(), s.expected);
                self.expired.push(SessionExpired {
                    iteration: it.name.clone(),
                    received: s.received.len(),
                    expected: s.expected,
                    at: now,
                });
                *s = MissionSession::idle();
            }
        }
    }

    fn check_rule(&self, rule: &Rule, msg: &MavMessage, now: Duration) -> Option<Verdict> {
        let binders = match_pattern(&rule.trigger, msg)?;
        let stale = self.state.is_stale(now, self.config.stale_window);
        let scope = MsgScope { msg, binders: &binders, spec: &self.spec, state: &self.state, iter: None };
        for branch in &rule.branches {
            if let Some(guard) = &branch.guard {
                if stale && reads_telemetry(guard) {
                    return Some(Verdict::reject(&rule.name, REASON_STALE, now));
                }
                match eval_expr(guard, &scope) {
                    Ok(Value::Bool(true)) => {}
                    Ok(Value::Bool(false)) => continue,
                    Ok(v) => {
                        return Some(Verdict::reject(
                            &rule.name,
                            format!("evaluation error: guard produced {}", v.type_name()),
                            now,
                        ))
                    }
                    Err(e) => return Some(Verdict::reject(&rule.name, format!("evaluation error: {e}"), now)),
                }
            }
            if stale && any_reads_telemetry(&branch.requirements) {
                return Some(Verdict::reject(&rule.name, REASON_STALE, now));
            }
            return Some(match check_requirements(&branch.requirements, &scope) {
                Check::Pass => Verdict::accept("refinement holds", Some(&rule.name), now),
                Check::Fail(reason) => Verdict::reject(&rule.name, reason, now),
            });
        }
        Some(Verdict::reject(&rule.name, REASON_NO_BRANCH, now))
    }

    fn check_iteration(
        &self,
        idx: usize,
        it: &IterationDecl,
        msg: &MavMessage,
        now: Duration,
    ) -> Option<Result<SessionUpdate, Verdict>> {
        let session = &self.sessions[idx];
        if let Some(binders) = match_pattern(&it.open, msg) {
            if session.status == SessionStatus::Uploading {
                return Some(Err(Verdict::reject(
                    &it.name,
                    format!("session already uploading ({} of {})", session.received.len(), session.expected),
                    now,
                )));
            }
            let count = match binders.first() {
                Some((_, Value::Num(n))) if *n >= 0.0 && *n <= f64::from(u16::MAX) => *n as u16,
                _ => return Some(Err(Verdict::reject(&it.name, "evaluation error: bad item count", now))),
            };
            return Some(Ok(SessionUpdate::Open { iter: idx, count }));
        }
        let binders = match_pattern(&it.item, msg)?;
        if session.status != SessionStatus::Uploading {
            return Some(Err(Verdict::reject(&it.name, REASON_NO_SESSION, now)));
        }
        let index = match binders.first() {
            Some((_, Value::Num(n))) => *n,
            _ => return Some(Err(Verdict::reject(&it.name, "evaluation error: bad item index", now))),
        };
        if index >= f64::from(session.expected) {
            return Some(Err(Verdict::reject(&it.name, format!("item {index} outside 0..{}", session.expected), now)));
        }
        let index = index as u16;
        if session.received.contains(&index) {
            return Some(Err(Verdict::reject(&it.name, format!("duplicate item {index}"), now)));
        }
        let stale = self.state.is_stale(now, self.config.stale_window);
        if stale && any_reads_telemetry(&it.requirements) {
            return Some(Err(Verdict::reject(&it.name, REASON_STALE, now)));
        }
        let scope = MsgScope {
            msg,
            binders: &binders,
            spec: &self.spec,
            state: &self.state,
            iter: Some([f64::from(index), f64::from(session.expected), session.received.len() as f64]),
        };
        Some(match check_requirements(&it.requirements, &scope) {
            Check::Pass => Ok(SessionUpdate::Item { iter: idx, index }),
            Check::Fail(reason) => Err(Verdict::reject(&it.name, reason, now)),
        })
    }

    fn check_bounds(&self, msg: &MavMessage, now: Duration) -> Option<Verdict> {
        let MavMessage::ParamSet(ps) = msg else {
            return None;
        };
        let name = ps.param_id.as_str();
        let entry = self.state.params.get(name.as_ref())?;
        if !entry.is_bounded() && ps.param_value.is_finite() {
            return None;
        }
        let v = f64::from(ps.param_value);
        if entry.within_bounds(v) {
            return Some(Verdict::accept("within static bounds", Some(RULE_PARAM_BOUNDS), now));
        }
        let fmt_bound = |b: Option<f64>| b.map_or_else(|| "-".to_string(), |x| x.to_string());
        Some(Verdict::reject(
            RULE_PARAM_BOUNDS,
            format!("{name} = {v} outside [{}, {}]", fmt_bound(entry.min), fmt_bound(entry.max)),
            now,
        ))
    }

    /// Decides one uplink message at monotonic time `now`.
    pub fn attest_at(&mut self, msg: &MavMessage, now: Duration) -> Verdict {
        self.expire_sessions(now);

        let mut matched: Option<Verdict> = None;
        for rule in &self.spec.rules {
            if let Some(v) = self.check_rule(rule, msg, now) {
                if !v.is_accept() {
                    return v;
                }
                matched.get_or_insert(v);
            }
        }

        let mut updates = Vec::new();
        for (idx, it) in self.spec.iterations.iter().enumerate() {
            match self.check_iteration(idx, it, msg, now) {
                None => {}
                Some(Err(v)) => return v,
                Some(Ok(u)) => {
                    matched.get_or_insert_with(|| Verdict::accept("iteration step", Some(&it.name), now));
                    updates.push(u);
                }
            }
        }

        if let Some(v) = self.check_bounds(msg, now) {
            if !v.is_accept() {
                return v;
            }
            matched.get_or_insert(v);
        }

        let verdict = match matched {
            Some(v) => v,
            None if self.config.default_deny => Verdict::reject(RULE_DEFAULT_DENY, "no rule matches", now),
            None => Verdict::accept("no rule matches", None, now),
        };

        for u in updates {
            match u {
                SessionUpdate::Open { iter, count } => {
                    let s = &mut self.sessions[iter];
                    *s = MissionSession {
                        status: if count == 0 { SessionStatus::Complete } else { SessionStatus::Uploading },
                        expected: count,
                        received: BTreeSet::new(),
                        opened_at: now,
                        last_activity: now,
                    };
                }
                SessionUpdate::Item { iter, index } => {
                    let s = &mut self.sessions[iter];
                    s.received.insert(index);
                    s.last_activity = now;
                    if s.received.len() == usize::from(s.expected) {
                        s.status = SessionStatus::Complete;
                    }
                }
            }
        }
        self.state.apply_accepted_command(msg);
        verdict
    }
}

/// Message sent back to the ground station when a command is rejected:
/// `COMMAND_ACK(DENIED)` for `COMMAND_LONG`, otherwise a warning
/// `STATUSTEXT` when `statustext` is set. `sender` is the (sysid, compid)
/// of the rejected frame.
pub fn rejection_feedback(
    msg: &MavMessage,
    verdict: &Verdict,
    sender: (u8, u8),
    statustext: bool,
) -> Option<MavMessage> {
    if verdict.is_accept() {
        return None;
    }
    match msg {
        MavMessage::CommandLong(c) => Some(MavMessage::CommandAck(CommandAck {
            command: c.command,
            result: MAV_RESULT_DENIED,
            target_system: sender.0,
            target_component: sender.1,
            ..Default::default()
        })),
        _ if statustext => {
            let text = format!("Denied {}: {}", msg.kind(), verdict.reason);
            Some(MavMessage::StatusText(StatusText {
                severity: MAV_SEVERITY_WARNING,
                text: StatusTextBuf::truncating(&text),
                ..Default::default()
            }))
        }
        _ => None,
    }
}
