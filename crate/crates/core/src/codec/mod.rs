//! MAVLink v2 codec for the message subset the gateway interprets.

mod crc;
mod frame;
mod messages;

pub use crc::{crc16_mcrf4xx, crc_accumulate, CRC_INIT};
pub use frame::{
    encode_into, frame_decode, frame_encode, DecodeError, Decoded, Frame, FrameHeader, FrameScanner, Scanned,
    CHECKSUM_LEN, HEADER_LEN, MAGIC_V2, MAX_FRAME_LEN, MAX_PAYLOAD_LEN,
};
pub use messages::*;
