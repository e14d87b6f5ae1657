use super::FusionAlgorithm;
use crate::error::{Error, Result};
use crate::gaussian::{read_u16, read_u32, read_u8, CanonicalFactor};

/// Factors over the common variables of a link, sent from one agent to another.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionMessage {
    pub sender: u32,
    pub recipient: u32,
    pub timestep: u32,
    pub algo: FusionAlgorithm,
    pub factors: Vec<CanonicalFactor>,
}

const HEADER_LEN: usize = 4 + 4 + 4 + 1 + 2;

impl FusionMessage {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.factors.iter().map(CanonicalFactor::encoded_len).sum::<usize>()
    }

    /// Little-endian header `{sender u32, recipient u32, timestep u32, algo u8,
    /// factor count u16}` followed by the encoded factors.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = u16::try_from(self.factors.len())
            .map_err(|_| Error::Dimension(format!("{} factors do not fit one message", self.factors.len())))?;
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&self.sender.to_le_bytes());
        buf.extend_from_slice(&self.recipient.to_le_bytes());
        buf.extend_from_slice(&self.timestep.to_le_bytes());
        buf.push(self.algo.code());
        buf.extend_from_slice(&count.to_le_bytes());
        for f in &self.factors {
            f.encode_into(&mut buf)?;
        }
        Ok(buf)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<FusionMessage> {
        let input = &mut bytes;
        let sender = read_u32(input)?;
        let recipient = read_u32(input)?;
        let timestep = read_u32(input)?;
        let algo = FusionAlgorithm::from_code(read_u8(input)?)?;
        let count = read_u16(input)?;
        let factors = (0..count)
            .map(|_| CanonicalFactor::decode_from(input))
            .collect::<Result<Vec<_>>>()?;
        if !input.is_empty() {
            return Err(Error::Decode(format!("{} trailing bytes after message", input.len())));
        }
        Ok(FusionMessage {
            sender,
            recipient,
            timestep,
            algo,
            factors,
        })
    }
}
