//! Typed payloads for the supported subset of the MAVLink common dialect.
//!
//! Wire order follows the dialect rules: base fields sorted by element size
//! (largest first, stable), extension fields appended in declaration order.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

// ---------------------------------------------------------------------------
// Fixed-width character fields
// ---------------------------------------------------------------------------

/// NUL-padded fixed-width `char[N]` field.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CharArray<const N: usize>(pub [u8; N]);

pub type ParamId = CharArray<16>;
pub type StatusTextBuf = CharArray<50>;

impl<const N: usize> CharArray<N> {
    /// Builds a padded field; `None` if `s` is longer than `N` bytes.
    pub fn new(s: &str) -> Option<Self> {
        let bytes = s.as_bytes();
        if bytes.len() > N {
            return None;
        }
        let mut out = [0u8; N];
        out[..bytes.len()].copy_from_slice(bytes);
        Some(Self(out))
    }

    /// Like [`CharArray::new`] but silently truncates.
    pub fn truncating(s: &str) -> Self {
        let bytes = s.as_bytes();
        let n = bytes.len().min(N);
        let mut out = [0u8; N];
        out[..n].copy_from_slice(&bytes[..n]);
        Self(out)
    }

    /// Content up to the first NUL.
    pub fn trimmed(&self) -> &[u8] {
        let end = self.0.iter().position(|&b| b == 0).unwrap_or(N);
        &self.0[..end]
    }

    pub fn as_str(&self) -> Cow<'_, str> {
        String::from_utf8_lossy(self.trimmed())
    }

    pub fn as_bytes(&self) -> &[u8; N] {
        &self.0
    }
}

impl<const N: usize> Default for CharArray<N> {
    fn default() -> Self {
        Self([0u8; N])
    }
}

impl<const N: usize> fmt::Debug for CharArray<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_str())
    }
}

impl<const N: usize> fmt::Display for CharArray<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str())
    }
}

impl<const N: usize> Serialize for CharArray<N> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_str())
    }
}

impl<'de, const N: usize> Deserialize<'de> for CharArray<N> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        CharArray::new(&s).ok_or_else(|| serde::de::Error::custom(format!("string of {} bytes exceeds {N}", s.len())))
    }
}

// ---------------------------------------------------------------------------
// Payload byte helpers
// ---------------------------------------------------------------------------

pub(crate) struct Writer<'a>(pub &'a mut Vec<u8>);

impl Writer<'_> {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i16(&mut self, v: i16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.0.extend_from_slice(v);
    }
}

/// Reads a truncated payload as if it were zero-extended to full length.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        let start = self.pos.min(self.buf.len());
        let end = (self.pos + N).min(self.buf.len());
        out[..end - start].copy_from_slice(&self.buf[start..end]);
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn i16(&mut self) -> i16 {
        i16::from_le_bytes(self.take())
    }
    fn i32(&mut self) -> i32 {
        i32::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
    fn chars<const N: usize>(&mut self) -> CharArray<N> {
        CharArray(self.take())
    }
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// Wire type of a payload field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    U8,
    U16,
    U32,
    I16,
    I32,
    F32,
    Chars(usize),
}

impl FieldKind {
    pub fn is_text(self) -> bool {
        matches!(self, FieldKind::Chars(_))
    }

    pub fn is_unsigned_int(self) -> bool {
        matches!(self, FieldKind::U8 | FieldKind::U16 | FieldKind::U32)
    }

    /// Width in bits for integer kinds.
    pub fn int_bits(self) -> Option<u32> {
        match self {
            FieldKind::U8 => Some(8),
            FieldKind::U16 | FieldKind::I16 => Some(16),
            FieldKind::U32 | FieldKind::I32 => Some(32),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FieldInfo {
    pub name: &'static str,
    pub kind: FieldKind,
}

const fn f(name: &'static str, kind: FieldKind) -> FieldInfo {
    FieldInfo { name, kind }
}

use FieldKind::*;

const HEARTBEAT_FIELDS: &[FieldInfo] = &[
    f("custom_mode", U32),
    f("type", U8),
    f("autopilot", U8),
    f("base_mode", U8),
    f("system_status", U8),
    f("mavlink_version", U8),
];
const PARAM_VALUE_FIELDS: &[FieldInfo] = &[
    f("param_value", F32),
    f("param_count", U16),
    f("param_index", U16),
    f("param_id", Chars(16)),
    f("param_type", U8),
];
const PARAM_SET_FIELDS: &[FieldInfo] = &[
    f("param_value", F32),
    f("target_system", U8),
    f("target_component", U8),
    f("param_id", Chars(16)),
    f("param_type", U8),
];
const GLOBAL_POSITION_INT_FIELDS: &[FieldInfo] = &[
    f("time_boot_ms", U32),
    f("lat", I32),
    f("lon", I32),
    f("alt", I32),
    f("relative_alt", I32),
    f("vx", I16),
    f("vy", I16),
    f("vz", I16),
    f("hdg", U16),
];
const MISSION_COUNT_FIELDS: &[FieldInfo] =
    &[f("count", U16), f("target_system", U8), f("target_component", U8), f("mission_type", U8)];
const MISSION_ACK_FIELDS: &[FieldInfo] =
    &[f("target_system", U8), f("target_component", U8), f("type", U8), f("mission_type", U8)];
const MISSION_ITEM_INT_FIELDS: &[FieldInfo] = &[
    f("param1", F32),
    f("param2", F32),
    f("param3", F32),
    f("param4", F32),
    f("x", I32),
    f("y", I32),
    f("z", F32),
    f("seq", U16),
    f("command", U16),
    f("target_system", U8),
    f("target_component", U8),
    f("frame", U8),
    f("current", U8),
    f("autocontinue", U8),
    f("mission_type", U8),
];
const COMMAND_LONG_FIELDS: &[FieldInfo] = &[
    f("param1", F32),
    f("param2", F32),
    f("param3", F32),
    f("param4", F32),
    f("param5", F32),
    f("param6", F32),
    f("param7", F32),
    f("command", U16),
    f("target_system", U8),
    f("target_component", U8),
    f("confirmation", U8),
];
const COMMAND_ACK_FIELDS: &[FieldInfo] = &[
    f("command", U16),
    f("result", U8),
    f("progress", U8),
    f("result_param2", I32),
    f("target_system", U8),
    f("target_component", U8),
];
const STATUSTEXT_FIELDS: &[FieldInfo] = &[f("severity", U8), f("text", Chars(50)), f("id", U16), f("chunk_seq", U8)];

/// Supported message types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    Heartbeat,
    ParamValue,
    ParamSet,
    GlobalPositionInt,
    MissionCount,
    MissionAck,
    MissionItemInt,
    CommandLong,
    CommandAck,
    StatusText,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::Heartbeat,
        MessageKind::ParamValue,
        MessageKind::ParamSet,
        MessageKind::GlobalPositionInt,
        MessageKind::MissionCount,
        MessageKind::MissionAck,
        MessageKind::MissionItemInt,
        MessageKind::CommandLong,
        MessageKind::CommandAck,
        MessageKind::StatusText,
    ];

    pub fn msgid(self) -> u32 {
        match self {
            MessageKind::Heartbeat => 0,
            MessageKind::ParamValue => 22,
            MessageKind::ParamSet => 23,
            MessageKind::GlobalPositionInt => 33,
            MessageKind::MissionCount => 44,
            MessageKind::MissionAck => 47,
            MessageKind::MissionItemInt => 73,
            MessageKind::CommandLong => 76,
            MessageKind::CommandAck => 77,
            MessageKind::StatusText => 253,
        }
    }

    pub fn crc_extra(self) -> u8 {
        match self {
            MessageKind::Heartbeat => 50,
            MessageKind::ParamValue => 220,
            MessageKind::ParamSet => 168,
            MessageKind::GlobalPositionInt => 104,
            MessageKind::MissionCount => 221,
            MessageKind::MissionAck => 153,
            MessageKind::MissionItemInt => 38,
            MessageKind::CommandLong => 152,
            MessageKind::CommandAck => 143,
            MessageKind::StatusText => 83,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Heartbeat => "HEARTBEAT",
            MessageKind::ParamValue => "PARAM_VALUE",
            MessageKind::ParamSet => "PARAM_SET",
            MessageKind::GlobalPositionInt => "GLOBAL_POSITION_INT",
            MessageKind::MissionCount => "MISSION_COUNT",
            MessageKind::MissionAck => "MISSION_ACK",
            MessageKind::MissionItemInt => "MISSION_ITEM_INT",
            MessageKind::CommandLong => "COMMAND_LONG",
            MessageKind::CommandAck => "COMMAND_ACK",
            MessageKind::StatusText => "STATUSTEXT",
        }
    }

    pub fn from_msgid(id: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.msgid() == id)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Fields in wire order.
    pub fn fields(self) -> &'static [FieldInfo] {
        match self {
            MessageKind::Heartbeat => HEARTBEAT_FIELDS,
            MessageKind::ParamValue => PARAM_VALUE_FIELDS,
            MessageKind::ParamSet => PARAM_SET_FIELDS,
            MessageKind::GlobalPositionInt => GLOBAL_POSITION_INT_FIELDS,
            MessageKind::MissionCount => MISSION_COUNT_FIELDS,
            MessageKind::MissionAck => MISSION_ACK_FIELDS,
            MessageKind::MissionItemInt => MISSION_ITEM_INT_FIELDS,
            MessageKind::CommandLong => COMMAND_LONG_FIELDS,
            MessageKind::CommandAck => COMMAND_ACK_FIELDS,
            MessageKind::StatusText => STATUSTEXT_FIELDS,
        }
    }

    pub fn field(self, name: &str) -> Option<FieldInfo> {
        self.fields().iter().copied().find(|fi| fi.name == name)
    }

    /// Full (untruncated) payload length.
    pub fn payload_len(self) -> usize {
        self.fields()
            .iter()
            .map(|fi| match fi.kind {
                U8 => 1,
                U16 | I16 => 2,
                U32 | I32 | F32 => 4,
                Chars(n) => n,
            })
            .sum()
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A field value as seen by the refinement language.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldValue {
    Num(f64),
    Text(String),
}

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Heartbeat {
    pub custom_mode: u32,
    #[serde(rename = "type")]
    pub mav_type: u8,
    pub autopilot: u8,
    pub base_mode: u8,
    pub system_status: u8,
    pub mavlink_version: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamValue {
    pub param_id: ParamId,
    pub param_value: f32,
    pub param_type: u8,
    pub param_count: u16,
    pub param_index: u16,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamSet {
    pub target_system: u8,
    pub target_component: u8,
    pub param_id: ParamId,
    pub param_value: f32,
    pub param_type: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalPositionInt {
    pub time_boot_ms: u32,
    pub lat: i32,
    pub lon: i32,
    pub alt: i32,
    pub relative_alt: i32,
    pub vx: i16,
    pub vy: i16,
    /// cm/s, positive down.
    pub vz: i16,
    pub hdg: u16,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionCount {
    pub target_system: u8,
    pub target_component: u8,
    pub count: u16,
    pub mission_type: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionAck {
    pub target_system: u8,
    pub target_component: u8,
    #[serde(rename = "type")]
    pub ack_type: u8,
    pub mission_type: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionItemInt {
    pub target_system: u8,
    pub target_component: u8,
    pub seq: u16,
    pub frame: u8,
    pub command: u16,
    pub current: u8,
    pub autocontinue: u8,
    pub param1: f32,
    pub param2: f32,
    pub param3: f32,
    pub param4: f32,
    pub x: i32,
    pub y: i32,
    pub z: f32,
    pub mission_type: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandLong {
    pub target_system: u8,
    pub target_component: u8,
    pub command: u16,
    pub confirmation: u8,
    pub param1: f32,
    pub param2: f32,
    pub param3: f32,
    pub param4: f32,
    pub param5: f32,
    pub param6: f32,
    pub param7: f32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandAck {
    pub command: u16,
    pub result: u8,
    pub progress: u8,
    pub result_param2: i32,
    pub target_system: u8,
    pub target_component: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatusText {
    pub severity: u8,
    pub text: StatusTextBuf,
    pub id: u16,
    pub chunk_seq: u8,
}

/// One decoded message of the supported subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "msg", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MavMessage {
    Heartbeat(Heartbeat),
    ParamValue(ParamValue),
    ParamSet(ParamSet),
    GlobalPositionInt(GlobalPositionInt),
    MissionCount(MissionCount),
    MissionAck(MissionAck),
    MissionItemInt(MissionItemInt),
    CommandLong(CommandLong),
    CommandAck(CommandAck),
    #[serde(rename = "STATUSTEXT")]
    StatusText(StatusText),
}

impl MavMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            MavMessage::Heartbeat(_) => MessageKind::Heartbeat,
            MavMessage::ParamValue(_) => MessageKind::ParamValue,
            MavMessage::ParamSet(_) => MessageKind::ParamSet,
            MavMessage::GlobalPositionInt(_) => MessageKind::GlobalPositionInt,
            MavMessage::MissionCount(_) => MessageKind::MissionCount,
            MavMessage::MissionAck(_) => MessageKind::MissionAck,
            MavMessage::MissionItemInt(_) => MessageKind::MissionItemInt,
            MavMessage::CommandLong(_) => MessageKind::CommandLong,
            MavMessage::CommandAck(_) => MessageKind::CommandAck,
            MavMessage::StatusText(_) => MessageKind::StatusText,
        }
    }

    pub fn msgid(&self) -> u32 {
        self.kind().msgid()
    }

    /// Appends the full, untruncated payload.
    pub(crate) fn write_payload(&self, out: &mut Vec<u8>) {
        let mut w = Writer(out);
        match self {
            MavMessage::Heartbeat(m) => {
                w.u32(m.custom_mode);
                w.u8(m.mav_type);
                w.u8(m.autopilot);
                w.u8(m.base_mode);
                w.u8(m.system_status);
                w.u8(m.mavlink_version);
            }
            MavMessage::ParamValue(m) => {
                w.f32(m.param_value);
                w.u16(m.param_count);
                w.u16(m.param_index);
                w.bytes(m.param_id.as_bytes());
                w.u8(m.param_type);
            }
            MavMessage::ParamSet(m) => {
                w.f32(m.param_value);
                w.u8(m.target_system);
                w.u8(m.target_component);
                w.bytes(m.param_id.as_bytes());
                w.u8(m.param_type);
            }
            MavMessage::GlobalPositionInt(m) => {
                w.u32(m.time_boot_ms);
                w.i32(m.lat);
                w.i32(m.lon);
                w.i32(m.alt);
                w.i32(m.relative_alt);
                w.i16(m.vx);
                w.i16(m.vy);
                w.i16(m.vz);
                w.u16(m.hdg);
            }
            MavMessage::MissionCount(m) => {
                w.u16(m.count);
                w.u8(m.target_system);
                w.u8(m.target_component);
                w.u8(m.mission_type);
            }
            MavMessage::MissionAck(m) => {
                w.u8(m.target_system);
                w.u8(m.target_component);
                w.u8(m.ack_type);
                w.u8(m.mission_type);
            }
            MavMessage::MissionItemInt(m) => {
                w.f32(m.param1);
                w.f32(m.param2);
                w.f32(m.param3);
                w.f32(m.param4);
                w.i32(m.x);
                w.i32(m.y);
                w.f32(m.z);
                w.u16(m.seq);
                w.u16(m.command);
                w.u8(m.target_system);
                w.u8(m.target_component);
                w.u8(m.frame);
                w.u8(m.current);
                w.u8(m.autocontinue);
                w.u8(m.mission_type);
            }
            MavMessage::CommandLong(m) => {
                for p in [m.param1, m.param2, m.param3, m.param4, m.param5, m.param6, m.param7] {
                    w.f32(p);
                }
                w.u16(m.command);
                w.u8(m.target_system);
                w.u8(m.target_component);
                w.u8(m.confirmation);
            }
            MavMessage::CommandAck(m) => {
                w.u16(m.command);
                w.u8(m.result);
                w.u8(m.progress);
                w.i32(m.result_param2);
                w.u8(m.target_system);
                w.u8(m.target_component);
            }
            MavMessage::StatusText(m) => {
                w.u8(m.severity);
                w.bytes(m.text.as_bytes());
                w.u16(m.id);
                w.u8(m.chunk_seq);
            }
        }
    }

    /// Decodes a (possibly truncated) payload. Bytes past the known layout are
    /// ignored so that newer extension fields do not break decoding.
    pub(crate) fn read_payload(kind: MessageKind, payload: &[u8]) -> MavMessage {
        let mut r = Reader::new(payload);
        match kind {
            MessageKind::Heartbeat => MavMessage::Heartbeat(Heartbeat {
                custom_mode: r.u32(),
                mav_type: r.u8(),
                autopilot: r.u8(),
                base_mode: r.u8(),
                system_status: r.u8(),
                mavlink_version: r.u8(),
            }),
            MessageKind::ParamValue => {
                let param_value = r.f32();
                let param_count = r.u16();
                let param_index = r.u16();
                MavMessage::ParamValue(ParamValue {
                    param_value,
                    param_count,
                    param_index,
                    param_id: r.chars(),
                    param_type: r.u8(),
                })
            }
            MessageKind::ParamSet => {
                let param_value = r.f32();
                MavMessage::ParamSet(ParamSet {
                    param_value,
                    target_system: r.u8(),
                    target_component: r.u8(),
                    param_id: r.chars(),
                    param_type: r.u8(),
                })
            }
            MessageKind::GlobalPositionInt => MavMessage::GlobalPositionInt(GlobalPositionInt {
                time_boot_ms: r.u32(),
                lat: r.i32(),
                lon: r.i32(),
                alt: r.i32(),
                relative_alt: r.i32(),
                vx: r.i16(),
                vy: r.i16(),
                vz: r.i16(),
                hdg: r.u16(),
            }),
            MessageKind::MissionCount => MavMessage::MissionCount(MissionCount {
                count: r.u16(),
                target_system: r.u8(),
                target_component: r.u8(),
                mission_type: r.u8(),
            }),
            MessageKind::MissionAck => MavMessage::MissionAck(MissionAck {
                target_system: r.u8(),
                target_component: r.u8(),
                ack_type: r.u8(),
                mission_type: r.u8(),
            }),
            MessageKind::MissionItemInt => {
                let (param1, param2, param3, param4) = (r.f32(), r.f32(), r.f32(), r.f32());
                let (x, y, z) = (r.i32(), r.i32(), r.f32());
                MavMessage::MissionItemInt(MissionItemInt {
                    param1,
                    param2,
                    param3,
                    param4,
                    x,
                    y,
                    z,
                    seq: r.u16(),
                    command: r.u16(),
                    target_system: r.u8(),
                    target_component: r.u8(),
                    frame: r.u8(),
                    current: r.u8(),
                    autocontinue: r.u8(),
                    mission_type: r.u8(),
                })
            }
            MessageKind::CommandLong => {
                let p: [f32; 7] = std::array::from_fn(|_| r.f32());
                MavMessage::CommandLong(CommandLong {
                    param1: p[0],
                    param2: p[1],
                    param3: p[2],
                    param4: p[3],
                    param5: p[4],
                    param6: p[5],
                    param7: p[6],
                    command: r.u16(),
                    target_system: r.u8(),
                    target_component: r.u8(),
                    confirmation: r.u8(),
                })
            }
            MessageKind::CommandAck => MavMessage::CommandAck(CommandAck {
                command: r.u16(),
                result: r.u8(),
                progress: r.u8(),
                result_param2: r.i32(),
                target_system: r.u8(),
                target_component: r.u8(),
            }),
            MessageKind::StatusText => {
                MavMessage::StatusText(StatusText { severity: r.u8(), text: r.chars(), id: r.u16(), chunk_seq: r.u8() })
            }
        }
    }

    /// Looks up a payload field by its dialect name. Integers and floats widen
    /// to `f64`; character arrays become text trimmed at the first NUL.
    pub fn field(&self, name: &str) -> Option<FieldValue> {
        use FieldValue::{Num, Text};
        let n = |v: f64| Some(Num(v));
        match self {
            MavMessage::Heartbeat(m) => match name {
                "custom_mode" => n(m.custom_mode.into()),
                "type" => n(m.mav_type.into()),
                "autopilot" => n(m.autopilot.into()),
                "base_mode" => n(m.base_mode.into()),
                "system_status" => n(m.system_status.into()),
                "mavlink_version" => n(m.mavlink_version.into()),
                _ => None,
            },
            MavMessage::ParamValue(m) => match name {
                "param_id" => Some(Text(m.param_id.as_str().into_owned())),
                "param_value" => n(m.param_value.into()),
                "param_type" => n(m.param_type.into()),
                "param_count" => n(m.param_count.into()),
                "param_index" => n(m.param_index.into()),
                _ => None,
            },
            MavMessage::ParamSet(m) => match name {
                "target_system" => n(m.target_system.into()),
                "target_component" => n(m.target_component.into()),
                "param_id" => Some(Text(m.param_id.as_str().into_owned())),
                "param_value" => n(m.param_value.into()),
                "param_type" => n(m.param_type.into()),
                _ => None,
            },
            MavMessage::GlobalPositionInt(m) => match name {
                "time_boot_ms" => n(m.time_boot_ms.into()),
                "lat" => n(m.lat.into()),
                "lon" => n(m.lon.into()),
                "alt" => n(m.alt.into()),
                "relative_alt" => n(m.relative_alt.into()),
                "vx" => n(m.vx.into()),
                "vy" => n(m.vy.into()),
                "vz" => n(m.vz.into()),
                "hdg" => n(m.hdg.into()),
                _ => None,
            },
            MavMessage::MissionCount(m) => match name {
                "target_system" => n(m.target_system.into()),
                "target_component" => n(m.target_component.into()),
                "count" => n(m.count.into()),
                "mission_type" => n(m.mission_type.into()),
                _ => None,
            },
            MavMessage::MissionAck(m) => match name {
                "target_system" => n(m.target_system.into()),
                "target_component" => n(m.target_component.into()),
                "type" => n(m.ack_type.into()),
                "mission_type" => n(m.mission_type.into()),
                _ => None,
            },
            MavMessage::MissionItemInt(m) => match name {
                "target_system" => n(m.target_system.into()),
                "target_component" => n(m.target_component.into()),
                "seq" => n(m.seq.into()),
                "frame" => n(m.frame.into()),
                "command" => n(m.command.into()),
                "current" => n(m.current.into()),
                "autocontinue" => n(m.autocontinue.into()),
                "param1" => n(m.param1.into()),
                "param2" => n(m.param2.into()),
                "param3" => n(m.param3.into()),
                "param4" => n(m.param4.into()),
                "x" => n(m.x.into()),
                "y" => n(m.y.into()),
                "z" => n(m.z.into()),
                "mission_type" => n(m.mission_type.into()),
                _ => None,
            },
            MavMessage::CommandLong(m) => match name {
                "target_system" => n(m.target_system.into()),
                "target_component" => n(m.target_component.into()),
                "command" => n(m.command.into()),
                "confirmation" => n(m.confirmation.into()),
                "param1" => n(m.param1.into()),
                "param2" => n(m.param2.into()),
                "param3" => n(m.param3.into()),
                "param4" => n(m.param4.into()),
                "param5" => n(m.param5.into()),
                "param6" => n(m.param6.into()),
                "param7" => n(m.param7.into()),
                _ => None,
            },
            MavMessage::CommandAck(m) => match name {
                "command" => n(m.command.into()),
                "result" => n(m.result.into()),
                "progress" => n(m.progress.into()),
                "result_param2" => n(m.result_param2.into()),
                "target_system" => n(m.target_system.into()),
                "target_component" => n(m.target_component.into()),
                _ => None,
            },
            MavMessage::StatusText(m) => match name {
                "severity" => n(m.severity.into()),
                "text" => Some(Text(m.text.as_str().into_owned())),
                "id" => n(m.id.into()),
                "chunk_seq" => n(m.chunk_seq.into()),
                _ => None,
            },
        }
    }
}
