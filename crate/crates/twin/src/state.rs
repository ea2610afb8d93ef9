//! Snapshot types published by the twin and their binary payload codecs.
//!
//! Layouts are little-endian and versioned with a leading `u16`, matching
//! the measurement payload codecs, so recorded state streams stay replayable
//! across builds that speak the same version.

use dtp_core::pose::Vec3;
use dtp_core::time::Timestamp;

use crate::fusion::PoseEstimate;
use crate::TwinError;

/// Codec version written into every state payload.
pub const STATE_CODEC_VERSION: u16 = 1;
/// Codec version written into every calibration report payload.
pub const CALIBRATION_CODEC_VERSION: u16 = 1;

/// One published snapshot of everything the twin currently believes:
/// vehicle pose, heap volume, how much of the heap region has been observed,
/// and the per-cell compaction pass counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinState {
    pub t: Timestamp,
    /// `None` until the first accepted position fix.
    pub pose: Option<PoseEstimate>,
    pub volume_m3: f64,
    pub observed_fraction: f64,
    pub coverage_width: u32,
    pub coverage_height: u32,
    /// Row-major pass counts, `coverage_width * coverage_height` entries.
    pub coverage_counts: Vec<u32>,
}

impl TwinState {
    pub fn validate(&self) -> Result<(), TwinError> {
        if !(0.0..=1.0).contains(&self.observed_fraction) {
            return Err(TwinError::Config(format!(
                "observed fraction {} outside [0, 1]",
                self.observed_fraction
            )));
        }
        if !(self.volume_m3 >= 0.0) {
            return Err(TwinError::Config(format!(
                "volume {} negative or NaN",
                self.volume_m3
            )));
        }
        let cells = self.coverage_width as usize * self.coverage_height as usize;
        if self.coverage_counts.len() != cells {
            return Err(TwinError::Config(format!(
                "coverage counts hold {} entries for {} cells",
                self.coverage_counts.len(),
                cells
            )));
        }
        Ok(())
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 8 + 1 + 64 + 16 + 8 + 4 * self.coverage_counts.len());
        out.extend_from_slice(&STATE_CODEC_VERSION.to_le_bytes());
        out.extend_from_slice(&self.t.as_nanos().to_le_bytes());
        match &self.pose {
            Some(p) => {
                out.push(1);
                out.extend_from_slice(&p.t.as_nanos().to_le_bytes());
                for v in [
                    p.position.x,
                    p.position.y,
                    p.position.z,
                    p.yaw,
                    p.position_sigma_m,
                    p.yaw_sigma_rad,
                ] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        out.extend_from_slice(&self.volume_m3.to_le_bytes());
        out.extend_from_slice(&self.observed_fraction.to_le_bytes());
        out.extend_from_slice(&self.coverage_width.to_le_bytes());
        out.extend_from_slice(&self.coverage_height.to_le_bytes());
        for c in &self.coverage_counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_payload(buf: &[u8]) -> Result<TwinState, TwinError> {
        let mut r = Cursor::new(buf);
        let version = r.u16()?;
        if version != STATE_CODEC_VERSION {
            return Err(TwinError::Payload(format!(
                "state codec version {version}, expected {STATE_CODEC_VERSION}"
            )));
        }
        let t = Timestamp::from_nanos(r.u64()?);
        let pose = match r.u8()? {
            0 => None,
            1 => {
                let pt = Timestamp::from_nanos(r.u64()?);
                let x = r.f64()?;
                let y = r.f64()?;
                let z = r.f64()?;
                let yaw = r.f64()?;
                let position_sigma_m = r.f64()?;
                let yaw_sigma_rad = r.f64()?;
                Some(PoseEstimate {
                    t: pt,
                    position: Vec3::new(x, y, z),
                    yaw,
                    position_sigma_m,
                    yaw_sigma_rad,
                })
            }
            other => {
                return Err(TwinError::Payload(format!("pose flag {other} invalid")));
            }
        };
        let volume_m3 = r.f64()?;
        let observed_fraction = r.f64()?;
        let coverage_width = r.u32()?;
        let coverage_height = r.u32()?;
        let cells = coverage_width as usize * coverage_height as usize;
        let mut coverage_counts = Vec::with_capacity(cells);
        for _ in 0..cells {
            coverage_counts.push(r.u32()?);
        }
        r.finish()?;
        let state = TwinState {
            t,
            pose,
            volume_m3,
            observed_fraction,
            coverage_width,
            coverage_height,
            coverage_counts,
        };
        state.validate()?;
        Ok(state)
    }
}

/// Outcome of a `calibrate` command, published on `twin/calibration`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub t: Timestamp,
    pub ok: bool,
    /// Estimated ranging-sensor mount angles; nominal values echoed on failure.
    pub roll_rad: f64,
    pub pitch_rad: f64,
    pub yaw_rad: f64,
    pub residual_rms_m: f64,
    pub scans_used: u32,
    /// Human-readable failure cause; empty when `ok`.
    pub message: String,
}

impl CalibrationReport {
    pub fn to_payload(&self) -> Vec<u8> {
        let msg = self.message.as_bytes();
        let mut out = Vec::with_capacity(2 + 8 + 1 + 32 + 4 + 2 + msg.len());
        out.extend_from_slice(&CALIBRATION_CODEC_VERSION.to_le_bytes());
        out.extend_from_slice(&self.t.as_nanos().to_le_bytes());
        out.push(self.ok as u8);
        for v in [self.roll_rad, self.pitch_rad, self.yaw_rad, self.residual_rms_m] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.scans_used.to_le_bytes());
        out.extend_from_slice(&(msg.len() as u16).to_le_bytes());
        out.extend_from_slice(msg);
        out
    }

    pub fn from_payload(buf: &[u8]) -> Result<CalibrationReport, TwinError> {
        let mut r = Cursor::new(buf);
        let version = r.u16()?;
        if version != CALIBRATION_CODEC_VERSION {
            return Err(TwinError::Payload(format!(
                "calibration codec version {version}, expected {CALIBRATION_CODEC_VERSION}"
            )));
        }
        let t = Timestamp::from_nanos(r.u64()?);
        let ok = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(TwinError::Payload(format!("ok flag {other} invalid"))),
        };
        let roll_rad = r.f64()?;
        let pitch_rad = r.f64()?;
        let yaw_rad = r.f64()?;
        let residual_rms_m = r.f64()?;
        let scans_used = r.u32()?;
        let msg_len = r.u16()? as usize;
        let msg = r.bytes(msg_len)?;
        let message = String::from_utf8(msg.to_vec())
            .map_err(|_| TwinError::Payload("report message is not UTF-8".into()))?;
        r.finish()?;
        Ok(CalibrationReport {
            t,
            ok,
            roll_rad,
            pitch_rad,
            yaw_rad,
            residual_rms_m,
            scans_used,
            message,
        })
    }
}

/// Little-endian field reader shared by the payload decoders.
struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, at: 0 }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], TwinError> {
        if self.at + n > self.buf.len() {
            return Err(TwinError::Payload(format!(
                "payload truncated at byte {} (wanted {n} more of {})",
                self.at,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TwinError> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TwinError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TwinError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TwinError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TwinError> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), TwinError> {
        if self.at != self.buf.len() {
            return Err(TwinError::Payload(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.at
            )));
        }
        Ok(())
    }
}
