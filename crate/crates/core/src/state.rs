//! Trusted-side mirror of vehicle state consulted by refinements.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::Serialize;

use crate::codec::MavMessage;
use crate::dsl::{ProtocolSpec, Value};

/// `MAV_MODE_FLAG_SAFETY_ARMED`
pub const MODE_FLAG_SAFETY_ARMED: u8 = 0x80;

/// ArduPilot Copter flight mode (`custom_mode` of HEARTBEAT).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct FlightMode(pub u32);

const COPTER_MODES: &[(u32, &str)] = &[
    (0, "STABILIZE"),
    (1, "ACRO"),
    (2, "ALT_HOLD"),
    (3, "AUTO"),
    (4, "GUIDED"),
    (5, "LOITER"),
    (6, "RTL"),
    (7, "CIRCLE"),
    (9, "LAND"),
    (11, "DRIFT"),
    (13, "SPORT"),
    (14, "FLIP"),
    (15, "AUTOTUNE"),
    (16, "POSHOLD"),
    (17, "BRAKE"),
    (18, "THROW"),
    (19, "AVOID_ADSB"),
    (20, "GUIDED_NOGPS"),
    (21, "SMART_RTL"),
    (22, "FLOWHOLD"),
    (23, "FOLLOW"),
    (24, "ZIGZAG"),
    (25, "SYSTEMID"),
    (26, "AUTOROTATE"),
    (27, "AUTO_RTL"),
];

impl FlightMode {
    pub const STABILIZE: FlightMode = FlightMode(0);
    pub const ACRO: FlightMode = FlightMode(1);
    pub const GUIDED: FlightMode = FlightMode(4);
    pub const FLIP: FlightMode = FlightMode(14);

    pub fn name(self) -> Option<&'static str> {
        COPTER_MODES.iter().find(|(id, _)| *id == self.0).map(|(_, n)| *n)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        COPTER_MODES.iter().find(|(_, n)| n.eq_ignore_ascii_case(name)).map(|(id, _)| FlightMode(*id))
    }
}

impl fmt::Display for FlightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(f, "MODE_{}", self.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamEntry {
    pub value: f64,
    pub default: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl ParamEntry {
    pub fn within_bounds(&self, v: f64) -> bool {
        v.is_finite() && self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }

    pub fn is_bounded(&self) -> bool {
        self.min.is_some() || self.max.is_some()
    }
}

/// Outcome of applying an accepted command.
#[derive(Clone, Debug, PartialEq)]
pub enum StateChange {
    None,
    Param { name: String, value: f64, declared: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VehicleState {
    pub params: BTreeMap<String, ParamEntry>,
    pub armed: bool,
    pub flight_mode: FlightMode,
    /// Metres above home.
    pub altitude_m: f64,
    /// Metres per second, positive up.
    pub climb_rate_mps: f64,
    /// Monotonic time of the last telemetry update.
    pub last_update: Option<Duration>,
}

impl VehicleState {
    pub fn from_spec(spec: &ProtocolSpec) -> Self {
        let params = spec
            .params
            .iter()
            .map(|d| {
                let e = ParamEntry { value: d.default, default: d.default, min: d.min, max: d.max };
                (d.name.clone(), e)
            })
            .collect();
        VehicleState {
            params,
            armed: false,
            flight_mode: FlightMode::STABILIZE,
            altitude_m: 0.0,
            climb_rate_mps: 0.0,
            last_update: None,
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).map(|p| p.value)
    }

    /// Updates the mirror from downlink telemetry.
    pub fn apply_telemetry(&mut self, msg: &MavMessage, now: Duration) {
        match msg {
            MavMessage::Heartbeat(hb) => {
                self.armed = hb.base_mode & MODE_FLAG_SAFETY_ARMED != 0;
                self.flight_mode = FlightMode(hb.custom_mode);
                self.last_update = Some(now);
            }
            MavMessage::GlobalPositionInt(p) => {
                self.altitude_m = f64::from(p.relative_alt) / 1000.0;
                // vz is positive down
                self.climb_rate_mps = -f64::from(p.vz) / 100.0;
                self.last_update = Some(now);
            }
            _ => {}
        }
    }

    /// Applies a command the attestor accepted.
    pub fn apply_accepted_command(&mut self, msg: &MavMessage) -> StateChange {
        let MavMessage::ParamSet(ps) = msg else {
            return StateChange::None;
        };
        let name = ps.param_id.as_str().into_owned();
        let value = f64::from(ps.param_value);
        let declared = match self.params.get_mut(&name) {
            Some(entry) => {
                entry.value = value;
                true
            }
            None => {
                log::warn!("mirroring undeclared parameter {name} = {value} without bounds");
                self.params.insert(name.clone(), ParamEntry { value, default: value, min: None, max: None });
                false
            }
        };
        StateChange::Param { name, value, declared }
    }

    /// True if no telemetry arrived within `window` of `now`.
    pub fn is_stale(&self, now: Duration, window: Duration) -> bool {
        self.last_update.is_none_or(|t| now.saturating_sub(t) > window)
    }

    /// Value of `state.NAME` in refinements.
    pub fn lookup(&self, name: &str) -> Option<Value> {
        match name {
            "armed" => Some(Value::Bool(self.armed)),
            "flight_mode" => Some(Value::Num(self.flight_mode.0.into())),
            "altitude_m" => Some(Value::Num(self.altitude_m)),
            "climb_rate_mps" => Some(Value::Num(self.climb_rate_mps)),
            _ => self.param(name).map(Value::Num),
        }
    }
}
