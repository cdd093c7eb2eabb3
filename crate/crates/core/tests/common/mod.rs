//! Reference implementations shared by the integration and acceptance tests.
//! None of this reuses library internals beyond the public data types.

#![allow(dead_code)]

use std::collections::BTreeSet;

use mavguard::codec::*;
use mavguard::dsl::{BinOp, EvalError, Expr, IterField, Scope, Value};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Reference codec, built from the dialect's field declarations
// ---------------------------------------------------------------------------

/// (dialect type, field name, is extension)
pub type FieldDecl = (&'static str, &'static str, bool);

/// Message name, id and fields in declaration order, as written in the
/// common dialect definition.
pub fn declarations() -> Vec<(&'static str, u32, Vec<FieldDecl>)> {
    let b = |t, n| (t, n, false);
    let e = |t, n| (t, n, true);
    vec![
        (
            "HEARTBEAT",
            0,
            vec![
                b("uint8_t", "type"),
                b("uint8_t", "autopilot"),
                b("uint8_t", "base_mode"),
                b("uint32_t", "custom_mode"),
                b("uint8_t", "system_status"),
                b("uint8_t_mavlink_version", "mavlink_version"),
            ],
        ),
        (
            "PARAM_VALUE",
            22,
            vec![
                b("char[16]", "param_id"),
                b("float", "param_value"),
                b("uint8_t", "param_type"),
                b("uint16_t", "param_count"),
                b("uint16_t", "param_index"),
            ],
        ),
        (
            "PARAM_SET",
            23,
            vec![
                b("uint8_t", "target_system"),
                b("uint8_t", "target_component"),
                b("char[16]", "param_id"),
                b("float", "param_value"),
                b("uint8_t", "param_type"),
            ],
        ),
        (
            "GLOBAL_POSITION_INT",
            33,
            vec![
                b("uint32_t", "time_boot_ms"),
                b("int32_t", "lat"),
                b("int32_t", "lon"),
                b("int32_t", "alt"),
                b("int32_t", "relative_alt"),
                b("int16_t", "vx"),
                b("int16_t", "vy"),
                b("int16_t", "vz"),
                b("uint16_t", "hdg"),
            ],
        ),
        (
            "MISSION_COUNT",
            44,
            vec![
                b("uint8_t", "target_system"),
                b("uint8_t", "target_component"),
                b("uint16_t", "count"),
                e("uint8_t", "mission_type"),
            ],
        ),
        (
            "MISSION_ACK",
            47,
            vec![
                b("uint8_t", "target_system"),
                b("uint8_t", "target_component"),
                b("uint8_t", "type"),
                e("uint8_t", "mission_type"),
            ],
        ),
        (
            "MISSION_ITEM_INT",
            73,
            vec![
                b("uint8_t", "target_system"),
                b("uint8_t", "target_component"),
                b("uint16_t", "seq"),
                b("uint8_t", "frame"),
                b("uint16_t", "command"),
                b("uint8_t", "current"),
                b("uint8_t", "autocontinue"),
                b("float", "param1"),
                b("float", "param2"),
                b("float", "param3"),
                b("float", "param4"),
                b("int32_t", "x"),
                b("int32_t", "y"),
                b("float", "z"),
                e("uint8_t", "mission_type"),
            ],
        ),
        (
            "COMMAND_LONG",
            76,
            vec![
                b("uint8_t", "target_system"),
                b("uint8_t", "target_component"),
                b("uint16_t", "command"),
                b("uint8_t", "confirmation"),
                b("float", "param1"),
                b("float", "param2"),
                b("float", "param3"),
                b("float", "param4"),
                b("float", "param5"),
                b("float", "param6"),
                b("float", "param7"),
            ],
        ),
        (
            "COMMAND_ACK",
            77,
            vec![
                b("uint16_t", "command"),
                b("uint8_t", "result"),
                e("uint8_t", "progress"),
                e("int32_t", "result_param2"),
                e("uint8_t", "target_system"),
                e("uint8_t", "target_component"),
            ],
        ),
        (
            "STATUSTEXT",
            253,
            vec![b("uint8_t", "severity"), b("char[50]", "text"), e("uint16_t", "id"), e("uint8_t", "chunk_seq")],
        ),
    ]
}

fn base_type(t: &str) -> &str {
    match t {
        "uint8_t_mavlink_version" => "uint8_t",
        t => t.split('[').next().unwrap(),
    }
}

fn array_len(t: &str) -> Option<usize> {
    let open = t.find('[')?;
    t[open + 1..t.len() - 1].parse().ok()
}

fn type_size(t: &str) -> usize {
    match base_type(t) {
        "char" | "uint8_t" | "int8_t" => 1,
        "uint16_t" | "int16_t" => 2,
        "uint32_t" | "int32_t" | "float" => 4,
        "uint64_t" | "int64_t" | "double" => 8,
        other => panic!("unknown type {other}"),
    }
}

/// Base fields sorted by element size, largest first and stable, followed
/// by extension fields in declaration order.
pub fn wire_order(fields: &[FieldDecl]) -> Vec<FieldDecl> {
    let mut base: Vec<FieldDecl> = fields.iter().copied().filter(|f| !f.2).collect();
    base.sort_by_key(|f| std::cmp::Reverse(type_size(f.0)));
    base.extend(fields.iter().copied().filter(|f| f.2));
    base
}

/// Bit-at-a-time CRC-16/MCRF4XX (reflected 0x1021, init 0xFFFF).
pub fn ref_crc(data: &[u8], mut crc: u16) -> u16 {
    for &byte in data {
        crc ^= u16::from(byte);
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0x8408 } else { crc >> 1 };
        }
    }
    crc
}

pub fn ref_crc_extra(name: &str, fields: &[FieldDecl]) -> u8 {
    let mut crc = ref_crc(format!("{name} ").as_bytes(), 0xFFFF);
    for f in wire_order(fields).iter().filter(|f| !f.2) {
        crc = ref_crc(format!("{} {} ", base_type(f.0), f.1).as_bytes(), crc);
        if let Some(n) = array_len(f.0) {
            crc = ref_crc(&[n as u8], crc);
        }
    }
    ((crc & 0xFF) ^ (crc >> 8)) as u8
}

fn field_bytes(t: &str, v: FieldValue, out: &mut Vec<u8>) {
    match (base_type(t), v) {
        ("char", FieldValue::Text(s)) => {
            let n = array_len(t).unwrap();
            let mut buf = vec![0u8; n];
            buf[..s.len()].copy_from_slice(s.as_bytes());
            out.extend(buf);
        }
        ("uint8_t", FieldValue::Num(x)) => out.push(x as u8),
        ("uint16_t", FieldValue::Num(x)) => out.extend((x as u16).to_le_bytes()),
        ("int16_t", FieldValue::Num(x)) => out.extend((x as i16).to_le_bytes()),
        ("uint32_t", FieldValue::Num(x)) => out.extend((x as u32).to_le_bytes()),
        ("int32_t", FieldValue::Num(x)) => out.extend((x as i32).to_le_bytes()),
        ("float", FieldValue::Num(x)) => out.extend((x as f32).to_le_bytes()),
        (t, v) => panic!("cannot encode {v:?} as {t}"),
    }
}

/// Encodes a v2 frame from the declarations alone, reading field values
/// through the public accessor.
pub fn ref_encode(msg: &MavMessage, seq: u8, sysid: u8, compid: u8) -> Vec<u8> {
    let decls = declarations();
    let (name, id, fields) = decls.iter().find(|d| d.1 == msg.msgid()).expect("declared message");
    let mut payload = Vec::new();
    for f in wire_order(fields) {
        let v = msg.field(f.1).unwrap_or_else(|| panic!("{name}.{} missing", f.1));
        field_bytes(f.0, v, &mut payload);
    }
    while payload.len() > 1 && *payload.last().unwrap() == 0 {
        payload.pop();
    }
    let mut frame = vec![0xFD, payload.len() as u8, 0, 0, seq, sysid, compid];
    frame.extend(&id.to_le_bytes()[..3]);
    frame.extend(&payload);
    let mut crc = ref_crc(&frame[1..], 0xFFFF);
    crc = ref_crc(&[ref_crc_extra(name, fields)], crc);
    frame.extend(crc.to_le_bytes());
    frame
}

// ---------------------------------------------------------------------------
// Message strategies
// ---------------------------------------------------------------------------

fn text<const N: usize>() -> impl Strategy<Value = CharArray<N>> {
    proptest::string::string_regex(&format!("[ -~]{{0,{N}}}")).unwrap().prop_map(|s| CharArray::new(&s).unwrap())
}

/// Finite floats over many magnitudes, including zero and subnormals.
pub fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![Just(0.0f32), Just(-0.0f32), -1e6f32..1e6f32, any::<f32>().prop_filter("finite", |x| x.is_finite()),]
}

pub fn arb_heartbeat() -> impl Strategy<Value = MavMessage> {
    (any::<u32>(), any::<u8>(), any::<u8>(), any::<u8>(), any::<u8>(), any::<u8>()).prop_map(|(c, t, a, b, s, v)| {
        MavMessage::Heartbeat(Heartbeat {
            custom_mode: c,
            mav_type: t,
            autopilot: a,
            base_mode: b,
            system_status: s,
            mavlink_version: v,
        })
    })
}

pub fn arb_param_value() -> impl Strategy<Value = MavMessage> {
    (text::<16>(), finite_f32(), any::<u8>(), any::<u16>(), any::<u16>()).prop_map(|(id, v, t, c, i)| {
        MavMessage::ParamValue(ParamValue {
            param_id: id,
            param_value: v,
            param_type: t,
            param_count: c,
            param_index: i,
        })
    })
}

pub fn arb_param_set() -> impl Strategy<Value = MavMessage> {
    (any::<u8>(), any::<u8>(), text::<16>(), finite_f32(), any::<u8>()).prop_map(|(s, c, id, v, t)| {
        MavMessage::ParamSet(ParamSet {
            target_system: s,
            target_component: c,
            param_id: id,
            param_value: v,
            param_type: t,
        })
    })
}

pub fn arb_global_position() -> impl Strategy<Value = MavMessage> {
    (any::<u32>(), any::<[i32; 4]>(), any::<[i16; 3]>(), any::<u16>()).prop_map(|(t, p, v, h)| {
        MavMessage::GlobalPositionInt(GlobalPositionInt {
            time_boot_ms: t,
            lat: p[0],
            lon: p[1],
            alt: p[2],
            relative_alt: p[3],
            vx: v[0],
            vy: v[1],
            vz: v[2],
            hdg: h,
        })
    })
}

pub fn arb_mission_count() -> impl Strategy<Value = MavMessage> {
    (any::<u8>(), any::<u8>(), any::<u16>(), any::<u8>()).prop_map(|(s, c, n, t)| {
        MavMessage::MissionCount(MissionCount { target_system: s, target_component: c, count: n, mission_type: t })
    })
}

pub fn arb_mission_ack() -> impl Strategy<Value = MavMessage> {
    (any::<u8>(), any::<u8>(), any::<u8>(), any::<u8>()).prop_map(|(s, c, a, t)| {
        MavMessage::MissionAck(MissionAck { target_system: s, target_component: c, ack_type: a, mission_type: t })
    })
}

pub fn arb_mission_item() -> impl Strategy<Value = MavMessage> {
    (
        (any::<u8>(), any::<u8>(), any::<u16>(), any::<u8>(), any::<u16>(), any::<u8>(), any::<u8>()),
        proptest::array::uniform4(finite_f32()),
        (any::<i32>(), any::<i32>(), finite_f32(), any::<u8>()),
    )
        .prop_map(|((ts, tc, seq, frame, command, current, ac), p, (x, y, z, mt))| {
            MavMessage::MissionItemInt(MissionItemInt {
                target_system: ts,
                target_component: tc,
                seq,
                frame,
                command,
                current,
                autocontinue: ac,
                param1: p[0],
                param2: p[1],
                param3: p[2],
                param4: p[3],
                x,
                y,
                z,
                mission_type: mt,
            })
        })
}

pub fn arb_command_long() -> impl Strategy<Value = MavMessage> {
    ((any::<u8>(), any::<u8>(), any::<u16>(), any::<u8>()), proptest::array::uniform7(finite_f32())).prop_map(
        |((ts, tc, command, conf), p)| {
            MavMessage::CommandLong(CommandLong {
                target_system: ts,
                target_component: tc,
                command,
                confirmation: conf,
                param1: p[0],
                param2: p[1],
                param3: p[2],
                param4: p[3],
                param5: p[4],
                param6: p[5],
                param7: p[6],
            })
        },
    )
}

pub fn arb_command_ack() -> impl Strategy<Value = MavMessage> {
    (any::<u16>(), any::<u8>(), any::<u8>(), any::<i32>(), any::<u8>(), any::<u8>()).prop_map(
        |(c, r, p, r2, ts, tc)| {
            MavMessage::CommandAck(CommandAck {
                command: c,
                result: r,
                progress: p,
                result_param2: r2,
                target_system: ts,
                target_component: tc,
            })
        },
    )
}

pub fn arb_statustext() -> impl Strategy<Value = MavMessage> {
    (any::<u8>(), text::<50>(), any::<u16>(), any::<u8>())
        .prop_map(|(s, t, id, c)| MavMessage::StatusText(StatusText { severity: s, text: t, id, chunk_seq: c }))
}

/// One strategy per supported message type, in `MessageKind::ALL` order.
pub fn per_kind_strategies() -> Vec<(MessageKind, BoxedStrategy<MavMessage>)> {
    vec![
        (MessageKind::Heartbeat, arb_heartbeat().boxed()),
        (MessageKind::ParamValue, arb_param_value().boxed()),
        (MessageKind::ParamSet, arb_param_set().boxed()),
        (MessageKind::GlobalPositionInt, arb_global_position().boxed()),
        (MessageKind::MissionCount, arb_mission_count().boxed()),
        (MessageKind::MissionAck, arb_mission_ack().boxed()),
        (MessageKind::MissionItemInt, arb_mission_item().boxed()),
        (MessageKind::CommandLong, arb_command_long().boxed()),
        (MessageKind::CommandAck, arb_command_ack().boxed()),
        (MessageKind::StatusText, arb_statustext().boxed()),
    ]
}

pub fn arb_message() -> BoxedStrategy<MavMessage> {
    let all: Vec<BoxedStrategy<MavMessage>> = per_kind_strategies().into_iter().map(|(_, s)| s).collect();
    proptest::strategy::Union::new(all).boxed()
}

// ---------------------------------------------------------------------------
// Reference expression interpreter
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum RefVal {
    N(f64),
    S(String),
    B(bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefErr {
    DivZero,
    Type,
    Unbound,
}

pub fn err_kind(e: &EvalError) -> RefErr {
    match e {
        EvalError::DivisionByZero => RefErr::DivZero,
        EvalError::TypeMismatch { .. } => RefErr::Type,
        EvalError::Unbound(_) => RefErr::Unbound,
    }
}

/// Fixed environment for random expressions. Names ending in `_missing`
/// are unbound.
pub struct Env;

impl Env {
    pub const VARS: [&'static str; 5] = ["a", "b", "z", "label", "flag"];
    pub const MSG: [&'static str; 3] = ["param_value", "param_id", "nope_missing"];
    pub const STATE: [&'static str; 4] = ["armed", "altitude_m", "MC_PITCH_P", "x_missing"];

    fn lookup_var(name: &str) -> Option<RefVal> {
        match name {
            "a" => Some(RefVal::N(3.5)),
            "b" => Some(RefVal::N(-2.0)),
            "z" => Some(RefVal::N(0.0)),
            "label" => Some(RefVal::S("MC_PITCH_P".into())),
            "flag" => Some(RefVal::B(true)),
            _ => None,
        }
    }

    fn lookup_msg(name: &str) -> Option<RefVal> {
        match name {
            "param_value" => Some(RefVal::N(1800.0)),
            "param_id" => Some(RefVal::S("MC_PITCHRATE_MAX".into())),
            _ => None,
        }
    }

    fn lookup_state(name: &str) -> Option<RefVal> {
        match name {
            "armed" => Some(RefVal::B(false)),
            "altitude_m" => Some(RefVal::N(15.25)),
            "MC_PITCH_P" => Some(RefVal::N(6.5)),
            _ => None,
        }
    }

    fn lookup_iter(f: IterField) -> Option<RefVal> {
        match f {
            IterField::Index => Some(RefVal::N(2.0)),
            IterField::Count => Some(RefVal::N(3.0)),
            IterField::Received => None,
        }
    }
}

fn to_value(v: RefVal) -> Value {
    match v {
        RefVal::N(x) => Value::Num(x),
        RefVal::S(s) => Value::Str(s),
        RefVal::B(b) => Value::Bool(b),
    }
}

impl Scope for Env {
    fn var(&self, name: &str) -> Option<Value> {
        Env::lookup_var(name).map(to_value)
    }
    fn msg_field(&self, name: &str) -> Option<Value> {
        Env::lookup_msg(name).map(to_value)
    }
    fn state(&self, name: &str) -> Option<Value> {
        Env::lookup_state(name).map(to_value)
    }
    fn iter(&self, field: IterField) -> Option<Value> {
        Env::lookup_iter(field).map(to_value)
    }
}

/// Straightforward tree walker: operands left to right, `and`/`or` skip
/// the right operand once the result is known, numbers are IEEE doubles.
pub fn ref_eval(e: &Expr) -> Result<RefVal, RefErr> {
    use RefVal::*;
    Ok(match e {
        Expr::Num(x) => N(*x),
        Expr::Str(s) => S(s.clone()),
        Expr::Bool(b) => B(*b),
        Expr::Var(n) => Env::lookup_var(n).ok_or(RefErr::Unbound)?,
        Expr::Msg(n) => Env::lookup_msg(n).ok_or(RefErr::Unbound)?,
        Expr::State(n) => Env::lookup_state(n).ok_or(RefErr::Unbound)?,
        Expr::Iter(f) => Env::lookup_iter(*f).ok_or(RefErr::Unbound)?,
        Expr::Neg(x) => match ref_eval(x)? {
            N(v) => N(-v),
            _ => return Err(RefErr::Type),
        },
        Expr::Not(x) => match ref_eval(x)? {
            B(v) => B(!v),
            _ => return Err(RefErr::Type),
        },
        Expr::Bin(BinOp::And, l, r) => match ref_eval(l)? {
            B(false) => B(false),
            B(true) => match ref_eval(r)? {
                B(v) => B(v),
                _ => return Err(RefErr::Type),
            },
            _ => return Err(RefErr::Type),
        },
        Expr::Bin(BinOp::Or, l, r) => match ref_eval(l)? {
            B(true) => B(true),
            B(false) => match ref_eval(r)? {
                B(v) => B(v),
                _ => return Err(RefErr::Type),
            },
            _ => return Err(RefErr::Type),
        },
        Expr::Bin(op, l, r) => {
            let a = ref_eval(l)?;
            let b = ref_eval(r)?;
            match (op, a, b) {
                (BinOp::Eq, x, y) | (BinOp::Ne, x, y) => {
                    let same = match (&x, &y) {
                        (N(p), N(q)) => p == q,
                        (S(p), S(q)) => p == q,
                        (B(p), B(q)) => p == q,
                        _ => return Err(RefErr::Type),
                    };
                    B(if *op == BinOp::Eq { same } else { !same })
                }
                (BinOp::Add, N(p), N(q)) => N(p + q),
                (BinOp::Sub, N(p), N(q)) => N(p - q),
                (BinOp::Mul, N(p), N(q)) => N(p * q),
                (BinOp::Div, N(p), N(q)) => {
                    if q == 0.0 {
                        return Err(RefErr::DivZero);
                    }
                    N(p / q)
                }
                (BinOp::Lt, N(p), N(q)) => B(p < q),
                (BinOp::Le, N(p), N(q)) => B(p <= q),
                (BinOp::Gt, N(p), N(q)) => B(p > q),
                (BinOp::Ge, N(p), N(q)) => B(p >= q),
                _ => return Err(RefErr::Type),
            }
        }
    })
}

/// Same outcome, with floats compared by bit pattern.
pub fn same_outcome(lib: &Result<Value, EvalError>, reference: &Result<RefVal, RefErr>) -> bool {
    match (lib, reference) {
        (Ok(Value::Num(a)), Ok(RefVal::N(b))) => a.to_bits() == b.to_bits(),
        (Ok(Value::Str(a)), Ok(RefVal::S(b))) => a == b,
        (Ok(Value::Bool(a)), Ok(RefVal::B(b))) => a == b,
        (Err(e), Err(k)) => err_kind(e) == *k,
        _ => false,
    }
}

const BIN_OPS: [BinOp; 12] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::And,
    BinOp::Or,
];

fn leaf(finite_only: bool) -> BoxedStrategy<Expr> {
    let nums: Vec<f64> = vec![0.0, 1.0, 2.5, 3.0, 10.0, 0.1, 1e308, 1e-300, 7.0];
    let mut leaves = vec![
        proptest::sample::select(nums).prop_map(Expr::Num).boxed(),
        (-1e3f64..1e3).prop_map(Expr::Num).boxed(),
        any::<bool>().prop_map(Expr::Bool).boxed(),
        proptest::sample::select(vec!["", "x", "MC_PITCH_P"]).prop_map(|s| Expr::Str(s.into())).boxed(),
        proptest::sample::select(Env::VARS.to_vec()).prop_map(|s| Expr::Var(s.into())).boxed(),
        proptest::sample::select(Env::MSG.to_vec()).prop_map(|s| Expr::Msg(s.into())).boxed(),
        proptest::sample::select(Env::STATE.to_vec()).prop_map(|s| Expr::State(s.into())).boxed(),
        proptest::sample::select(vec![IterField::Index, IterField::Count, IterField::Received])
            .prop_map(Expr::Iter)
            .boxed(),
    ];
    if !finite_only {
        leaves.push(proptest::sample::select(vec![f64::NAN, f64::INFINITY, -0.0]).prop_map(Expr::Num).boxed());
    }
    proptest::strategy::Union::new(leaves).boxed()
}

fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    Expr::Bin(op, Box::new(l), Box::new(r))
}

fn num_leaf() -> BoxedStrategy<Expr> {
    prop_oneof![
        4 => proptest::sample::select(vec![0.0, 1.0, 2.5, 3.0, 10.0, 0.1, 1e308, 1e-300, 7.0]).prop_map(Expr::Num),
        4 => (-1e3f64..1e3).prop_map(Expr::Num),
        2 => proptest::sample::select(vec!["a", "b", "z"]).prop_map(|s| Expr::Var(s.into())),
        1 => Just(Expr::Msg("param_value".into())),
        1 => proptest::sample::select(vec!["altitude_m", "MC_PITCH_P"]).prop_map(|s| Expr::State(s.into())),
        1 => proptest::sample::select(vec![IterField::Index, IterField::Count]).prop_map(Expr::Iter),
    ]
    .boxed()
}

fn bool_leaf() -> BoxedStrategy<Expr> {
    prop_oneof![
        3 => any::<bool>().prop_map(Expr::Bool),
        1 => Just(Expr::Var("flag".into())),
        1 => Just(Expr::State("armed".into())),
    ]
    .boxed()
}

fn str_leaf() -> BoxedStrategy<Expr> {
    prop_oneof![
        proptest::sample::select(vec!["", "x", "MC_PITCH_P"]).prop_map(|s| Expr::Str(s.into())),
        Just(Expr::Var("label".into())),
        Just(Expr::Msg("param_id".into())),
    ]
    .boxed()
}

/// Mostly well-typed numeric trees.
fn num_expr(depth: u32) -> BoxedStrategy<Expr> {
    if depth == 0 {
        return num_leaf();
    }
    let sub = num_expr(depth - 1);
    prop_oneof![
        2 => num_leaf(),
        1 => sub.clone().prop_map(|e| Expr::Neg(Box::new(e))),
        4 => (proptest::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]), sub.clone(), sub)
            .prop_map(|(op, l, r)| bin(op, l, r)),
    ]
    .boxed()
}

/// Mostly well-typed boolean trees.
fn bool_expr(depth: u32) -> BoxedStrategy<Expr> {
    if depth == 0 {
        return bool_leaf();
    }
    let b = bool_expr(depth - 1);
    let n = num_expr(depth - 1);
    let cmp = proptest::sample::select(vec![BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne]);
    let eq = proptest::sample::select(vec![BinOp::Eq, BinOp::Ne]);
    prop_oneof![
        1 => bool_leaf(),
        1 => b.clone().prop_map(|e| Expr::Not(Box::new(e))),
        3 => (proptest::sample::select(vec![BinOp::And, BinOp::Or]), b.clone(), b.clone())
            .prop_map(|(op, l, r)| bin(op, l, r)),
        3 => (cmp, n.clone(), n).prop_map(|(op, l, r)| bin(op, l, r)),
        1 => (eq.clone(), str_leaf(), str_leaf()).prop_map(|(op, l, r)| bin(op, l, r)),
        1 => (eq, b.clone(), b).prop_map(|(op, l, r)| bin(op, l, r)),
    ]
    .boxed()
}

/// Unconstrained trees over every node kind, including unbound names.
fn any_expr(depth: u32, finite_only: bool) -> BoxedStrategy<Expr> {
    leaf(finite_only)
        .prop_recursive(depth, 64, 2, |inner| {
            prop_oneof![
                1 => inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                1 => inner.clone().prop_map(|e| Expr::Not(Box::new(e))),
                6 => (proptest::sample::select(BIN_OPS.to_vec()), inner.clone(), inner)
                    .prop_map(|(op, l, r)| bin(op, l, r)),
            ]
        })
        .boxed()
}

/// Random expression trees of depth at most `depth` (a leaf has depth 0):
/// typed numeric and boolean trees, where most evaluations succeed, mixed
/// with unconstrained trees that exercise the error paths.
pub fn arb_expr(depth: u32, finite_only: bool) -> BoxedStrategy<Expr> {
    let num = num_expr(depth);
    let num = if finite_only { num } else { prop_oneof![9 => num, 1 => leaf(false)].boxed() };
    prop_oneof![
        3 => num,
        4 => bool_expr(depth),
        3 => any_expr(depth, finite_only),
    ]
    .boxed()
}

pub fn depth(e: &Expr) -> u32 {
    match e {
        Expr::Neg(x) | Expr::Not(x) => 1 + depth(x),
        Expr::Bin(_, l, r) => 1 + depth(l).max(depth(r)),
        _ => 0,
    }
}

/// Literal negative numbers print as `-N`, which reparses as the literal
/// `-N`; normalise `Neg(Num)` so printed trees compare equal after parsing.
pub fn canonical(e: &Expr) -> Expr {
    match e {
        Expr::Neg(x) => match canonical(x) {
            Expr::Num(v) => Expr::Num(-v),
            other => Expr::Neg(Box::new(other)),
        },
        Expr::Not(x) => Expr::Not(Box::new(canonical(x))),
        Expr::Bin(op, l, r) => Expr::Bin(*op, Box::new(canonical(l)), Box::new(canonical(r))),
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// Mission upload automaton
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sym {
    Count(u16),
    Item(u16),
    Ack,
}

impl Sym {
    pub fn message(self) -> MavMessage {
        match self {
            Sym::Count(n) => MavMessage::MissionCount(MissionCount { count: n, ..Default::default() }),
            Sym::Item(s) => MavMessage::MissionItemInt(MissionItemInt { seq: s, ..Default::default() }),
            Sym::Ack => MavMessage::MissionAck(MissionAck::default()),
        }
    }
}

/// "Exactly N distinct sequence numbers from 0..N, only while an upload is
/// open; a second count while open is refused."
#[derive(Clone, Debug, Default)]
pub struct MissionAutomaton {
    open: Option<(u16, BTreeSet<u16>)>,
}

impl MissionAutomaton {
    pub fn step(&mut self, s: Sym) -> bool {
        match s {
            Sym::Ack => true,
            Sym::Count(_) if self.open.is_some() => false,
            Sym::Count(0) => true,
            Sym::Count(n) => {
                self.open = Some((n, BTreeSet::new()));
                true
            }
            Sym::Item(seq) => {
                let Some((n, seen)) = &mut self.open else {
                    return false;
                };
                if seq >= *n || !seen.insert(seq) {
                    return false;
                }
                if seen.len() == usize::from(*n) {
                    self.open = None;
                }
                true
            }
        }
    }
}

pub fn mission_alphabet(max_n: u16) -> Vec<Sym> {
    let mut v: Vec<Sym> = (0..=max_n).map(Sym::Count).collect();
    v.extend((0..=max_n).map(Sym::Item));
    v.push(Sym::Ack);
    v
}

/// Walks every sequence over `mission_alphabet(max_n)` up to `max_len`
/// symbols, comparing the monitor's decisions with the automaton at each
/// prefix. Returns (sequences checked, first disagreements).
pub fn mission_oracle_check(monitor: &mavguard::attestor::Monitor, max_n: u16, max_len: usize) -> (u64, Vec<String>) {
    let alphabet = mission_alphabet(max_n);
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut trace = Vec::new();
    walk(monitor, &MissionAutomaton::default(), &alphabet, max_len, &mut trace, &mut checked, &mut bad);
    (checked, bad)
}

fn walk(
    monitor: &mavguard::attestor::Monitor,
    auto: &MissionAutomaton,
    alphabet: &[Sym],
    left: usize,
    trace: &mut Vec<Sym>,
    checked: &mut u64,
    bad: &mut Vec<String>,
) {
    if left == 0 {
        return;
    }
    for &s in alphabet {
        let mut m = monitor.clone();
        let mut a = auto.clone();
        let got = m.attest_at(&s.message(), std::time::Duration::ZERO).is_accept();
        let want = a.step(s);
        trace.push(s);
        *checked += 1;
        if got != want {
            if bad.len() < 10 {
                bad.push(format!("{trace:?}: monitor {got}, automaton {want}"));
            }
        } else {
            walk(&m, &a, alphabet, left - 1, trace, checked, bad);
        }
        trace.pop();
    }
}

// ---------------------------------------------------------------------------
// Ring stress
// ---------------------------------------------------------------------------

fn stress_frame(i: u64, buf: &mut Vec<u8>) {
    buf.clear();
    buf.extend_from_slice(&i.to_le_bytes());
    let extra = (i.wrapping_mul(2654435761) % 240) as usize;
    buf.extend((0..extra).map(|k| (i as u8).wrapping_add(k as u8)));
}

#[derive(Debug, Default)]
pub struct StressOutcome {
    pub received: u64,
    pub lost: u64,
    pub duplicated: u64,
    pub out_of_order: u64,
    pub corrupted: u64,
}

impl StressOutcome {
    pub fn clean(&self, sent: u64) -> bool {
        self.received == sent && self.lost == 0 && self.duplicated == 0 && self.out_of_order == 0 && self.corrupted == 0
    }
}

/// Pushes `frames` numbered frames through a fresh ring from one thread
/// while another pops them, both sides pausing at random.
pub fn ring_stress(frames: u64, capacity: usize, seed: u64) -> StressOutcome {
    use mavguard::ring::{channel, Backoff, PushError};
    use rand::{rngs::StdRng, Rng, SeedableRng};
    use std::time::Duration;

    let (mut tx, mut rx) = channel(capacity, 300).unwrap();
    let producer = std::thread::spawn(move || {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut buf = Vec::new();
        for i in 0..frames {
            stress_frame(i, &mut buf);
            let mut backoff = Backoff::new(rng.gen_range(0..200), Duration::from_micros(rng.gen_range(1..20)));
            loop {
                match tx.push(&buf) {
                    Ok(()) => break,
                    Err(PushError::Full) => backoff.wait(),
                    Err(e) => panic!("{e}"),
                }
            }
            if rng.gen_ratio(1, 500) {
                std::thread::sleep(Duration::from_micros(rng.gen_range(0..200)));
            }
        }
    });

    let mut rng = StdRng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut out = StressOutcome::default();
    let mut seen = vec![false; frames as usize];
    let mut next = 0u64;
    let mut expect = Vec::new();
    let mut backoff = Backoff::new(rng.gen_range(0..200), Duration::from_micros(rng.gen_range(1..20)));
    loop {
        let got = rx.pop_with(|f| f.to_vec());
        match got {
            Some(f) => {
                backoff.reset();
                out.received += 1;
                let i = u64::from_le_bytes(f[..8].try_into().unwrap());
                stress_frame(i, &mut expect);
                if f != expect {
                    out.corrupted += 1;
                }
                if i >= frames || seen[i as usize] {
                    out.duplicated += 1;
                } else {
                    seen[i as usize] = true;
                }
                if i != next {
                    out.out_of_order += 1;
                }
                next = i + 1;
                if rng.gen_ratio(1, 500) {
                    std::thread::sleep(Duration::from_micros(rng.gen_range(0..200)));
                }
            }
            None if !rx.producer_alive() && rx.is_empty() => break,
            None => backoff.wait(),
        }
    }
    producer.join().unwrap();
    out.lost = seen.iter().filter(|s| !**s).count() as u64;
    out
}
