//! Little-endian binary encoding of canonical factors.
//!
//! Layout: `u32` scope count, then per variable `{u16 name length, UTF-8 name,
//! u32 timestep, u16 dim}`, then zeta as `f64`s, then lambda row-major as `f64`s.

use nalgebra::{DMatrix, DVector};

use super::factor::CanonicalFactor;
use super::key::{scope_dim, VariableKey};
use crate::error::{Error, Result};

impl CanonicalFactor {
    pub fn encoded_len(&self) -> usize {
        let header: usize = 4 + self.scope().iter().map(|k| 2 + k.name().len() + 4 + 2).sum::<usize>();
        let n = self.dim();
        header + 8 * (n + n * n)
    }

    pub fn encode_into(&self, buf: &mut Vec<u8>) -> Result<()> {
        buf.reserve(self.encoded_len());
        let count = u32::try_from(self.scope().len())
            .map_err(|_| Error::Dimension("too many variables to encode".into()))?;
        buf.extend_from_slice(&count.to_le_bytes());
        for k in self.scope() {
            let name = k.name().as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Dimension(format!("variable name too long: {}", k.name())))?;
            let dim = u16::try_from(k.dim())
                .map_err(|_| Error::Dimension(format!("variable {k} too large to encode")))?;
            buf.extend_from_slice(&len.to_le_bytes());
            buf.extend_from_slice(name);
            buf.extend_from_slice(&k.timestep().to_le_bytes());
            buf.extend_from_slice(&dim.to_le_bytes());
        }
        for v in self.zeta().iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let n = self.dim();
        for r in 0..n {
            for c in 0..n {
                buf.extend_from_slice(&self.lambda()[(r, c)].to_le_bytes());
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.encode_into(&mut buf)?;
        Ok(buf)
    }

    /// Decodes one factor from the front of `input`, advancing the slice.
    pub fn decode_from(input: &mut &[u8]) -> Result<CanonicalFactor> {
        let count = read_u32(input)? as usize;
        let mut scope = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = read_u16(input)? as usize;
            let name = take(input, len)?;
            let name = std::str::from_utf8(name).map_err(|e| Error::Decode(e.to_string()))?;
            let timestep = read_u32(input)?;
            let dim = read_u16(input)? as usize;
            if dim == 0 {
                return Err(Error::Decode(format!("variable {name} has zero dimension")));
            }
            scope.push(VariableKey::new(name, timestep, dim));
        }
        let n = scope_dim(&scope);
        let mut zeta = DVector::zeros(n);
        for i in 0..n {
            zeta[i] = read_f64(input)?;
        }
        let mut lambda = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                lambda[(r, c)] = read_f64(input)?;
            }
        }
        CanonicalFactor::new(scope, zeta, lambda)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<CanonicalFactor> {
        let f = Self::decode_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Decode(format!("{} trailing bytes", bytes.len())));
        }
        Ok(f)
    }
}

pub(crate) fn take<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::Decode(format!("need {n} bytes, {} left", input.len())));
    }
    let (head, tail) = input.split_at(n);
    *input = tail;
    Ok(head)
}

pub(crate) fn read_u8(input: &mut &[u8]) -> Result<u8> {
    Ok(take(input, 1)?[0])
}

pub(crate) fn read_u16(input: &mut &[u8]) -> Result<u16> {
    Ok(u16::from_le_bytes(take(input, 2)?.try_into().expect("2 bytes")))
}

pub(crate) fn read_u32(input: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(input, 4)?.try_into().expect("4 bytes")))
}

fn read_f64(input: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(input, 8)?.try_into().expect("8 bytes")))
}
