//! Camera frame wire format (all integers little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `"EITP"`                     |
//! | 4      | 1    | version (`1`)                      |
//! | 5      | 2    | camera id                          |
//! | 7      | 4    | sequence number                    |
//! | 11     | 8    | timestamp, microseconds, sender clock |
//! | 19     | 2    | height                             |
//! | 21     | 2    | width                              |
//! | 23     | h*w  | grayscale pixels, row-major        |
//! | 23+h*w | 4    | CRC-32 (IEEE) of bytes `0..23+h*w` |
//!
//! Decoding checks, in order: header length, declared length, CRC, then
//! magic and version. A single flipped bit anywhere outside the two extent
//! fields therefore reports [`PacketError::Integrity`].

use thiserror::Error;

pub const PACKET_MAGIC: &[u8; 4] = b"EITP";
pub const PACKET_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 23;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("integrity error: crc {found:#010x} != computed {computed:#010x}")]
    Integrity { found: u32, computed: u32 },
    #[error("truncated packet: need {needed} bytes, have {have}")]
    Truncation { needed: usize, have: usize },
    #[error("payload of {payload} bytes does not match {height}x{width} frame")]
    Extent { payload: usize, height: u16, width: u16 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamPacket {
    pub camera_id: u16,
    pub sequence_no: u32,
    pub timestamp_us: u64,
    pub height: u16,
    pub width: u16,
    pub payload: Vec<u8>,
}

impl StreamPacket {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CRC_LEN
    }
}

pub fn encode_packet(p: &StreamPacket) -> Result<Vec<u8>, PacketError> {
    if p.payload.len() != p.height as usize * p.width as usize {
        return Err(PacketError::Extent {
            payload: p.payload.len(),
            height: p.height,
            width: p.width,
        });
    }
    let mut buf = Vec::with_capacity(p.encoded_len());
    buf.extend_from_slice(PACKET_MAGIC);
    buf.push(PACKET_VERSION);
    buf.extend_from_slice(&p.camera_id.to_le_bytes());
    buf.extend_from_slice(&p.sequence_no.to_le_bytes());
    buf.extend_from_slice(&p.timestamp_us.to_le_bytes());
    buf.extend_from_slice(&p.height.to_le_bytes());
    buf.extend_from_slice(&p.width.to_le_bytes());
    buf.extend_from_slice(&p.payload);
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

/// Parse exactly one packet; never reads past `bytes`.
pub fn decode_packet(bytes: &[u8]) -> Result<StreamPacket, PacketError> {
    if bytes.len() < HEADER_LEN {
        return Err(PacketError::Truncation {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let height = le_u16(bytes, 19);
    let width = le_u16(bytes, 21);
    let payload_len = height as usize * width as usize;
    let total = HEADER_LEN + payload_len + CRC_LEN;
    if bytes.len() < total {
        return Err(PacketError::Truncation {
            needed: total,
            have: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(PacketError::Protocol(format!(
            "{} trailing bytes after a {height}x{width} packet",
            bytes.len() - total
        )));
    }
    let body = &bytes[..total - CRC_LEN];
    let found = le_u32(bytes, total - CRC_LEN);
    let computed = crc32fast::hash(body);
    if found != computed {
        return Err(PacketError::Integrity { found, computed });
    }
    if &bytes[0..4] != PACKET_MAGIC {
        return Err(PacketError::Protocol(format!("bad magic {:?}", &bytes[0..4])));
    }
    if bytes[4] != PACKET_VERSION {
        return Err(PacketError::Protocol(format!("unsupported version {}", bytes[4])));
    }
    Ok(StreamPacket {
        camera_id: le_u16(bytes, 5),
        sequence_no: le_u32(bytes, 7),
        timestamp_us: u64::from_le_bytes(bytes[11..19].try_into().expect("8 bytes")),
        height,
        width,
        payload: bytes[HEADER_LEN..HEADER_LEN + payload_len].to_vec(),
    })
}
