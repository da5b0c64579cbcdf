//! Fixed-width little-endian beacon frame.
//!
//! | offset | size | field                          |
//! |-------:|-----:|--------------------------------|
//! | 0      | 1    | magic `0xAD`                   |
//! | 1      | 4    | sender id, `u32`               |
//! | 5      | 8    | timestamp s, `f64`             |
//! | 13     | 8    | x m, `f64`                     |
//! | 21     | 8    | y m, `f64`                     |
//! | 29     | 8    | heading rad, `f64`             |
//! | 37     | 8    | velocity m/s, `f64`            |
//! | 45     | 1    | protocol state code, `u8`      |
//! | 46     | 1    | ρ, `u8` 0/1                    |
//! | 47     | 8    | χ, `f64`                       |
//! | 55     | 8    | R, `f64`                       |
//! | 63     | 1    | HV flag, `u8` 0/1              |

use thiserror::Error;

use crate::geometry::Point;
use crate::vehicle::{VehicleId, VehicleState};

pub const FRAME_LEN: usize = 64;
pub const MAGIC: u8 = 0xAD;

pub const MAX_ABS_COORD: f64 = 1e6;
pub const MAX_ABS_SPEED: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beacon {
    pub sender: VehicleId,
    pub timestamp: f64,
    pub position: Point,
    pub heading: f64,
    pub velocity: f64,
    pub state: VehicleState,
    pub rho: bool,
    pub chi: f64,
    pub r: f64,
    pub hv_flag: bool,
}

impl Default for Beacon {
    fn default() -> Self {
        Beacon {
            sender: 0,
            timestamp: 0.0,
            position: Point::new(0.0, 0.0),
            heading: 0.0,
            velocity: 0.0,
            state: VehicleState::NotAroundIntersection,
            rho: false,
            chi: 0.0,
            r: 0.0,
            hv_flag: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("field {0} outside its encodable range")]
    OutOfRange(&'static str),
    #[error("frame length {0}, expected {FRAME_LEN}")]
    BadLength(usize),
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("invalid value {value} in byte field {field}")]
    BadByte { field: &'static str, value: u8 },
}

fn check(b: &Beacon) -> Result<(), CodecError> {
    use CodecError::OutOfRange;
    if !(b.timestamp.is_finite() && b.timestamp >= 0.0) {
        return Err(OutOfRange("timestamp"));
    }
    if !(b.position.x.abs() < MAX_ABS_COORD) {
        return Err(OutOfRange("x"));
    }
    if !(b.position.y.abs() < MAX_ABS_COORD) {
        return Err(OutOfRange("y"));
    }
    if !b.heading.is_finite() {
        return Err(OutOfRange("heading"));
    }
    if !(b.velocity.abs() < MAX_ABS_SPEED) {
        return Err(OutOfRange("velocity"));
    }
    if !(b.chi.is_finite() && b.chi >= 0.0) {
        return Err(OutOfRange("chi"));
    }
    if !(0.0..1.0).contains(&b.r) {
        return Err(OutOfRange("r"));
    }
    Ok(())
}

pub fn encode(b: &Beacon) -> Result<[u8; FRAME_LEN], CodecError> {
    check(b)?;
    let mut out = [0u8; FRAME_LEN];
    out[0] = MAGIC;
    out[1..5].copy_from_slice(&b.sender.to_le_bytes());
    let floats = [
        (5, b.timestamp),
        (13, b.position.x),
        (21, b.position.y),
        (29, b.heading),
        (37, b.velocity),
        (47, b.chi),
        (55, b.r),
    ];
    for (off, v) in floats {
        out[off..off + 8].copy_from_slice(&v.to_le_bytes());
    }
    out[45] = b.state.code();
    out[46] = u8::from(b.rho);
    out[63] = u8::from(b.hv_flag);
    Ok(out)
}

fn f64_at(bytes: &[u8], off: usize) -> f64 {
    f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap())
}

fn flag(field: &'static str, value: u8) -> Result<bool, CodecError> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(CodecError::BadByte { field, value }),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Beacon, CodecError> {
    if bytes.len() != FRAME_LEN {
        return Err(CodecError::BadLength(bytes.len()));
    }
    if bytes[0] != MAGIC {
        return Err(CodecError::BadMagic(bytes[0]));
    }
    let state = VehicleState::from_code(bytes[45]).ok_or(CodecError::BadByte {
        field: "state",
        value: bytes[45],
    })?;
    let b = Beacon {
        sender: u32::from_le_bytes(bytes[1..5].try_into().unwrap()),
        timestamp: f64_at(bytes, 5),
        position: Point::new(f64_at(bytes, 13), f64_at(bytes, 21)),
        heading: f64_at(bytes, 29),
        velocity: f64_at(bytes, 37),
        state,
        rho: flag("rho", bytes[46])?,
        chi: f64_at(bytes, 47),
        r: f64_at(bytes, 55),
        hv_flag: flag("hv_flag", bytes[63])?,
    };
    check(&b)?;
    Ok(b)
}

/// Lowercase hex rendering of a frame, for beacon dumps.
pub fn to_hex(frame: &[u8]) -> String {
    use std::fmt::Write;
    let mut s = String::with_capacity(frame.len() * 2);
    for byte in frame {
        write!(s, "{byte:02x}").unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_beacon_round_trips() {
        let b = Beacon::default();
        let bytes = encode(&b).unwrap();
        assert_eq!(bytes.len(), FRAME_LEN);
        assert_eq!(decode(&bytes).unwrap(), b);
    }

    #[test]
    fn hv_flag_changes_only_its_byte() {
        let a = Beacon {
            sender: 7,
            timestamp: 12.3,
            position: Point::new(-5.0, 1.5),
            velocity: 4.0,
            chi: 33.0,
            r: 0.25,
            ..Default::default()
        };
        let b = Beacon { hv_flag: true, ..a };
        let (ea, eb) = (encode(&a).unwrap(), encode(&b).unwrap());
        let diff: Vec<usize> = (0..FRAME_LEN).filter(|&i| ea[i] != eb[i]).collect();
        assert_eq!(diff, vec![63]);
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        let bad = [
            Beacon { position: Point::new(1e6, 0.0), ..Default::default() },
            Beacon { position: Point::new(0.0, -2e6), ..Default::default() },
            Beacon { velocity: 100.0, ..Default::default() },
            Beacon { r: 1.0, ..Default::default() },
            Beacon { chi: -1.0, ..Default::default() },
            Beacon { chi: f64::NAN, ..Default::default() },
            Beacon { timestamp: -0.1, ..Default::default() },
        ];
        for b in bad {
            assert!(matches!(encode(&b), Err(CodecError::OutOfRange(_))), "{b:?}");
        }
    }

    #[test]
    fn malformed_frames_are_rejected() {
        let good = encode(&Beacon::default()).unwrap();
        assert_eq!(decode(&good[..63]), Err(CodecError::BadLength(63)));
        let mut m = good;
        m[0] = 0;
        assert_eq!(decode(&m), Err(CodecError::BadMagic(0)));
        let mut m = good;
        m[45] = 6;
        assert!(matches!(decode(&m), Err(CodecError::BadByte { field: "state", .. })));
        let mut m = good;
        m[46] = 2;
        assert!(matches!(decode(&m), Err(CodecError::BadByte { field: "rho", .. })));
    }

    #[test]
    fn hex_dump() {
        assert_eq!(to_hex(&[0xad, 0x01, 0xff]), "ad01ff");
    }
}
