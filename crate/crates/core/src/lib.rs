//! A partitioned MAVLink gateway.
//!
//! An untrusted network side and a trusted flight-control side exchange whole
//! MAVLink frames only through bounded single-producer/single-consumer rings.
//! On the trusted side an attestor checks every uplink message against a
//! declarative refinement spec and a mirror of vehicle state before the frame
//! is allowed to reach the flight control software.

pub mod attestor;
pub mod codec;
pub mod dsl;
pub mod gateway;
pub mod harness;
pub mod ring;
pub mod state;
