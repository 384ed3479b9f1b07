//! Tagged, length-prefixed byte records.
//!
//! Every record is `tag: u8 ∥ body length: u32 BE ∥ body`.
//!
//! | tag  | type          | body                                                        |
//! |------|---------------|-------------------------------------------------------------|
//! | 0x10 | `Commitment`  | 32-byte digest                                              |
//! | 0x11 | Merkle root   | 32-byte digest                                              |
//! | 0x12 | `MerklePath`  | `u64 BE` index, then per level: side byte (0 = L, 1 = R) and 32-byte sibling |
//! | 0x13 | `Randomness`  | 32 bytes                                                    |

use super::{CommitError, Commitment, Digest, MerklePath, Randomness, Side, DIGEST_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum RecordTag {
    Commitment = 0x10,
    MerkleRoot = 0x11,
    MerklePath = 0x12,
    Randomness = 0x13,
}

pub trait Record: Sized {
    const TAG: RecordTag;

    fn encode_body(&self, out: &mut Vec<u8>);

    fn decode_body(body: &[u8]) -> Result<Self, CommitError>;

    fn to_record(&self) -> Vec<u8> {
        let mut body = Vec::new();
        self.encode_body(&mut body);
        let mut out = Vec::with_capacity(5 + body.len());
        out.push(Self::TAG as u8);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes one record and returns it with the unread remainder.
    fn from_record(bytes: &[u8]) -> Result<(Self, &[u8]), CommitError> {
        let (&tag, rest) = bytes.split_first().ok_or_else(|| malformed("empty record"))?;
        if tag != Self::TAG as u8 {
            return Err(malformed(format!(
                "expected tag {:#04x}, found {tag:#04x}",
                Self::TAG as u8
            )));
        }
        let len = rest
            .get(..4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| malformed("truncated length"))?;
        let body = rest.get(4..4 + len).ok_or_else(|| malformed("truncated body"))?;
        Ok((Self::decode_body(body)?, &rest[4 + len..]))
    }
}

fn malformed(msg: impl Into<String>) -> CommitError {
    CommitError::Malformed(msg.into())
}

fn digest_body(body: &[u8]) -> Result<Digest, CommitError> {
    body.try_into()
        .map(Digest)
        .map_err(|_| malformed("digest must be 32 bytes"))
}

impl Record for Commitment {
    const TAG: RecordTag = RecordTag::Commitment;

    fn encode_body(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.0.as_bytes());
    }

    fn decode_body(body: &[u8]) -> Result<Self, CommitError> {
        digest_body(body).map(Commitment)
    }
}

impl Record for Randomness {
    const TAG: RecordTag = RecordTag::Randomness;

    fn encode_body(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.0.as_bytes());
    }

    fn decode_body(body: &[u8]) -> Result<Self, CommitError> {
        digest_body(body).map(Randomness)
    }
}

/// Merkle roots are bare digests.
impl Record for Digest {
    const TAG: RecordTag = RecordTag::MerkleRoot;

    fn encode_body(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.as_bytes());
    }

    fn decode_body(body: &[u8]) -> Result<Self, CommitError> {
        digest_body(body)
    }
}

impl Record for MerklePath {
    const TAG: RecordTag = RecordTag::MerklePath;

    fn encode_body(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.index as u64).to_be_bytes());
        for (sib, side) in &self.siblings {
            out.push(match side {
                Side::Left => 0,
                Side::Right => 1,
            });
            out.extend_from_slice(sib.as_bytes());
        }
    }

    fn decode_body(body: &[u8]) -> Result<Self, CommitError> {
        if body.len() < 8 || !(body.len() - 8).is_multiple_of(1 + DIGEST_LEN) {
            return Err(malformed("bad merkle path length"));
        }
        let index = u64::from_be_bytes(body[..8].try_into().unwrap());
        let index = usize::try_from(index).map_err(|_| malformed("index too large"))?;
        let siblings = body[8..]
            .chunks_exact(1 + DIGEST_LEN)
            .map(|c| {
                let side = match c[0] {
                    0 => Side::Left,
                    1 => Side::Right,
                    b => return Err(malformed(format!("bad side byte {b}"))),
                };
                Ok((digest_body(&c[1..])?, side))
            })
            .collect::<Result<_, _>>()?;
        Ok(MerklePath { index, siblings })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{mt_commit, mt_open, CommitParams};
    use super::*;

    #[test]
    fn commitment_layout() {
        let rec = Commitment(Digest([0xab; 32])).to_record();
        assert_eq!(&rec[..5], &[0x10, 0, 0, 0, 32]);
        assert_eq!(rec.len(), 37);
        let (back, rest) = Commitment::from_record(&rec).unwrap();
        assert_eq!(back.0, Digest([0xab; 32]));
        assert!(rest.is_empty());
    }

    #[test]
    fn path_round_trip_and_tag_check() {
        let pp = CommitParams::default();
        let (_, tree) = mt_commit(&pp, &[b"a", b"b", b"c"]).unwrap();
        let path = mt_open(&pp, &tree, 2).unwrap();
        let rec = path.to_record();
        assert_eq!(rec.len(), 5 + 8 + 2 * 33);
        assert_eq!(&rec[5..13], &2u64.to_be_bytes());
        assert_eq!(MerklePath::from_record(&rec).unwrap().0, path);
        assert!(Commitment::from_record(&rec).is_err());
        assert!(MerklePath::from_record(&rec[..rec.len() - 1]).is_err());
    }
}
