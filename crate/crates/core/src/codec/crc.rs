//! CRC-16/MCRF4XX (the X.25 accumulate used by MAVLink framing).

pub const CRC_INIT: u16 = 0xFFFF;

#[inline]
pub fn crc_accumulate(byte: u8, crc: u16) -> u16 {
    let mut tmp = byte ^ (crc & 0xFF) as u8;
    tmp ^= tmp << 4;
    let tmp = tmp as u16;
    (crc >> 8) ^ (tmp << 8) ^ (tmp << 3) ^ (tmp >> 4)
}

/// Runs the MCRF4XX accumulator over `data` starting from `seed`.
pub fn crc16_mcrf4xx(data: &[u8], seed: u16) -> u16 {
    data.iter().fold(seed, |crc, &b| crc_accumulate(b, crc))
}
