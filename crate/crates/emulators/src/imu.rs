//! Binary IMU frame encoding.
//!
//! Frame layout (22 bytes, little-endian):
//!
//! ```text
//! AA 55 | len:u8 (=17) | seq:u8 | t_ms:u32 | ax ay az:i16 (milli-g)
//! | gx gy gz:i16 (0.1°/s) | crc:u16 (CRC-16/CCITT-FALSE over len..gz)
//! ```

use dtp_core::measure::{ImuSample, MeasureError};
use dtp_core::wire::crc16_ccitt_false;

pub const IMU_SYNC: [u8; 2] = [0xAA, 0x55];
/// Payload bytes counted by the length field: seq + t_ms + six i16 values.
pub const IMU_PAYLOAD_LEN: u8 = 17;
pub const IMU_FRAME_LEN: usize = 22;

/// Encodes one sample. The sample's wire-unit fields must round into i16
/// (`MeasureError::ImuRange` otherwise); a live emulator saturates its truth
/// into range before calling this.
pub fn encode_frame(sample: &ImuSample, seq: u8) -> Result<[u8; IMU_FRAME_LEN], MeasureError> {
    sample.validate()?;
    let mut frame = [0u8; IMU_FRAME_LEN];
    frame[0] = IMU_SYNC[0];
    frame[1] = IMU_SYNC[1];
    frame[2] = IMU_PAYLOAD_LEN;
    frame[3] = seq;
    let t_ms = (sample.time.0 / 1_000_000) as u32;
    frame[4..8].copy_from_slice(&t_ms.to_le_bytes());
    let fields = [
        sample.accel_mg[0],
        sample.accel_mg[1],
        sample.accel_mg[2],
        sample.gyro_dds[0],
        sample.gyro_dds[1],
        sample.gyro_dds[2],
    ];
    for (i, v) in fields.iter().enumerate() {
        let raw = v.round() as i16;
        frame[8 + 2 * i..10 + 2 * i].copy_from_slice(&raw.to_le_bytes());
    }
    let crc = crc16_ccitt_false(&frame[2..20]);
    frame[20..22].copy_from_slice(&crc.to_le_bytes());
    Ok(frame)
}

/// Saturates wire-unit values into the signed 16-bit range, like the
/// ADC of a real part clipping at full scale.
pub fn saturate_sample(sample: &ImuSample) -> ImuSample {
    let clip = |v: f64| v.clamp(i16::MIN as f64, i16::MAX as f64);
    ImuSample {
        time: sample.time,
        accel_mg: sample.accel_mg.map(clip),
        gyro_dds: sample.gyro_dds.map(clip),
    }
}
