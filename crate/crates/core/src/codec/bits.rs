use crate::error::{Error, Result};

/// MSB-first bit packer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `n` bits of `value`, most significant first.
    pub fn write(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for k in (0..n).rev() {
            let bit = (value >> k) & 1;
            let at = (self.bits % 8) as u32;
            if at == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> at;
            }
            self.bits += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    /// Bytes with the final partial byte zero-padded, and the bit count.
    pub fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bits)
    }
}

/// Reads bits written by [`BitWriter`], never past `bit_len`.
pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], bit_len: u64) -> Result<Self> {
        if bit_len.div_ceil(8) != bytes.len() as u64 {
            return Err(Error::Truncated(format!(
                "{bit_len} bits need {} bytes, have {}",
                bit_len.div_ceil(8),
                bytes.len()
            )));
        }
        Ok(BitReader { bytes, bit_len, pos: 0 })
    }

    pub fn bit(&mut self) -> Result<u64> {
        if self.pos >= self.bit_len {
            return Err(Error::Truncated(format!("bitstream ended at bit {}", self.pos)));
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = (byte >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Ok(bit as u64)
    }

    pub fn read(&mut self, n: u32) -> Result<u64> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    pub fn remaining(&self) -> u64 {
        self.bit_len - self.pos
    }
}

/// Unsigned LEB128.
pub fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

/// Decodes one LEB128 value from the front of `bytes`; returns it with the
/// number of bytes consumed.
pub fn read_varint(bytes: &[u8]) -> Result<(u64, usize)> {
    let mut v: u64 = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if i == 10 || (i == 9 && b > 1) {
            return Err(Error::InvalidArgument("varint overflows 64 bits".into()));
        }
        v |= ((b & 0x7f) as u64) << (7 * i);
        if b & 0x80 == 0 {
            return Ok((v, i + 1));
        }
    }
    Err(Error::Truncated("varint runs past end of data".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_round_trip_across_bytes() {
        let mut w = BitWriter::new();
        w.write(0b101, 3);
        w.write(0xABCD, 16);
        w.write(1, 1);
        let (bytes, n) = w.finish();
        assert_eq!(n, 20);
        assert_eq!(bytes.len(), 3);
        assert_eq!(bytes[0], 0b1011_0101);
        let mut r = BitReader::new(&bytes, n).unwrap();
        assert_eq!(r.read(3).unwrap(), 0b101);
        assert_eq!(r.read(16).unwrap(), 0xABCD);
        assert_eq!(r.read(1).unwrap(), 1);
        assert!(r.bit().is_err());
    }

    #[test]
    fn varints() {
        for v in [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX] {
            let mut out = Vec::new();
            write_varint(&mut out, v);
            assert_eq!(read_varint(&out).unwrap(), (v, out.len()));
        }
        let mut out = Vec::new();
        write_varint(&mut out, 300);
        assert_eq!(out, [0xAC, 0x02]);
        assert!(read_varint(&[0x80]).is_err());
        assert!(read_varint(&[0xff; 11]).is_err());
    }
}
