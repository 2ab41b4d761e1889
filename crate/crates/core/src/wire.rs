//! Length-prefixed records exchanged between clients and the server.
//!
//! Each record is `u32 body_len` followed by the body
//! `{u8 opcode, u32 client, u32 class, u32 dim, dim × f32}`, all little-endian.
//! Upload records carry one prototype; a retrieve record has no payload and
//! reuses the `class` field for `k_e`; download records carry one retrieved
//! prototype with `client` set to its origin.

use crate::error::{Error, Result};

/// Length prefix plus the fixed body header.
pub const FRAME_OVERHEAD: usize = 4 + 1 + 4 + 4 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Upload = 1,
    Retrieve = 2,
    Download = 3,
}

impl TryFrom<u8> for Opcode {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Opcode::Upload),
            2 => Ok(Opcode::Retrieve),
            3 => Ok(Opcode::Download),
            other => Err(Error::Wire(format!("unknown opcode {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub opcode: Opcode,
    pub client: u32,
    pub class: u32,
    pub payload: Vec<f32>,
}

impl Record {
    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + 4 * self.payload.len()
    }

    /// Bytes spent on scalars when each is shipped at `bytes_per_scalar`.
    pub fn payload_bytes(&self, bytes_per_scalar: usize) -> usize {
        self.payload.len() * bytes_per_scalar
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let body_len = (self.encoded_len() - 4) as u32;
        out.extend_from_slice(&body_len.to_le_bytes());
        out.push(self.opcode as u8);
        out.extend_from_slice(&self.client.to_le_bytes());
        out.extend_from_slice(&self.class.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_all(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.iter().map(Record::encoded_len).sum());
    for r in records {
        r.encode_into(&mut out);
    }
    out
}

fn read_u32(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte slice")))
        .ok_or_else(|| Error::Wire(format!("truncated at byte {at}")))
}

/// Decodes one record from the front of `buf`, returning it with the number
/// of bytes consumed.
pub fn decode_one(buf: &[u8]) -> Result<(Record, usize)> {
    let body_len = read_u32(buf, 0)? as usize;
    let total = 4 + body_len;
    if buf.len() < total {
        return Err(Error::Wire(format!(
            "record declares {body_len} body bytes, {} available",
            buf.len().saturating_sub(4)
        )));
    }
    if body_len < FRAME_OVERHEAD - 4 {
        return Err(Error::Wire(format!("body of {body_len} bytes is too short")));
    }
    let opcode = Opcode::try_from(buf[4])?;
    let client = read_u32(buf, 5)?;
    let class = read_u32(buf, 9)?;
    let dim = read_u32(buf, 13)? as usize;
    if body_len != FRAME_OVERHEAD - 4 + 4 * dim {
        return Err(Error::Wire(format!(
            "body length {body_len} inconsistent with dim {dim}"
        )));
    }
    let payload = buf[FRAME_OVERHEAD..total]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok((
        Record {
            opcode,
            client,
            class,
            payload,
        },
        total,
    ))
}

pub fn decode_all(mut buf: &[u8]) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    while !buf.is_empty() {
        let (r, used) = decode_one(buf)?;
        out.push(r);
        buf = &buf[used..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian() {
        let r = Record {
            opcode: Opcode::Upload,
            client: 2,
            class: 7,
            payload: vec![1.0],
        };
        let bytes = encode_all(std::slice::from_ref(&r));
        assert_eq!(bytes.len(), FRAME_OVERHEAD + 4);
        assert_eq!(&bytes[..4], &17u32.to_le_bytes());
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &7u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &1u32.to_le_bytes());
        assert_eq!(&bytes[17..], &1.0f32.to_le_bytes());
        assert_eq!(decode_all(&bytes).unwrap(), vec![r]);
    }

    #[test]
    fn rejects_corruption() {
        let r = Record {
            opcode: Opcode::Download,
            client: 0,
            class: 0,
            payload: vec![0.5, 0.25],
        };
        let bytes = encode_all(&[r]);
        assert!(decode_all(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_all(&bad).is_err());
        let mut bad = bytes;
        bad[13] = 3;
        assert!(decode_all(&bad).is_err());
    }

    proptest! {
        #[test]
        fn stream_roundtrip(recs in prop::collection::vec(
            (1u8..=3, any::<u32>(), any::<u32>(), prop::collection::vec(-1e6f32..1e6, 0..16)),
            0..8,
        )) {
            let recs: Vec<Record> = recs
                .into_iter()
                .map(|(op, client, class, payload)| Record {
                    opcode: Opcode::try_from(op).unwrap(),
                    client,
                    class,
                    payload,
                })
                .collect();
            let bytes = encode_all(&recs);
            prop_assert_eq!(bytes.len(), recs.iter().map(Record::encoded_len).sum::<usize>());
            prop_assert_eq!(decode_all(&bytes).unwrap(), recs);
        }
    }
}
