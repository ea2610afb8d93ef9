//! Checksums shared by the device emulators and the drivers.
//!
//! Both sides must agree bit-for-bit, so the implementations live here and
//! are pinned by check-value tests.

/// CRC-16/CCITT-FALSE: polynomial 0x1021, initial value 0xFFFF, no
/// reflection, no final XOR. Check value over ASCII "123456789" is 0x29B1.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= (byte as u16) << 8;
        for _ in 0..8 {
            if crc & 0x8000 != 0 {
                crc = (crc << 1) ^ 0x1021;
            } else {
                crc <<= 1;
            }
        }
    }
    crc
}

/// NMEA 0183 checksum: XOR of every byte strictly between `$` and `*`.
/// `body` is that interior span, without the delimiters.
pub fn nmea_checksum(body: &[u8]) -> u8 {
    body.iter().fold(0u8, |acc, &b| acc ^ b)
}

/// Renders an NMEA checksum as the two uppercase hex digits that follow `*`.
pub fn nmea_checksum_hex(body: &[u8]) -> String {
    format!("{:02X}", nmea_checksum(body))
}
