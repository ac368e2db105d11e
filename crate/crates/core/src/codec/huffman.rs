//! Baseline-JPEG style entropy layer: DC size categories with difference
//! coding, AC (run, size) symbols, and the Annex K default luminance
//! Huffman tables, all over an MSB-first bit stream.

use crate::error::{Error, Result};

/// Annex K luminance DC table: codes per length, then symbol values.
pub const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
pub const DC_LUMA_VALS: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

pub const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
pub const AC_LUMA_VALS: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61,
    0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52,
    0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25,
    0x26, 0x27, 0x28, 0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45,
    0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64,
    0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83,
    0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
    0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
    0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3,
    0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8,
    0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
];

const EOB: u8 = 0x00;
const ZRL: u8 = 0xF0;

/// Symbol -> (code, length) map built from a (bits, vals) table pair.
pub struct HuffEncoder {
    code: [u16; 256],
    size: [u8; 256],
}

impl HuffEncoder {
    pub fn new(bits: &[u8; 16], vals: &[u8]) -> HuffEncoder {
        let mut enc = HuffEncoder {
            code: [0; 256],
            size: [0; 256],
        };
        let mut code = 0u16;
        let mut k = 0usize;
        for (len_idx, &count) in bits.iter().enumerate() {
            let len = len_idx as u8 + 1;
            for _ in 0..count {
                let sym = vals[k] as usize;
                enc.code[sym] = code;
                enc.size[sym] = len;
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        enc
    }

    fn emit(&self, w: &mut BitWriter, symbol: u8) {
        let s = symbol as usize;
        debug_assert!(self.size[s] > 0, "symbol {symbol:#x} has no code");
        w.put_bits(self.code[s] as u32, self.size[s] as u32);
    }
}

/// Canonical decoder tables (mincode/maxcode/valptr per code length).
pub struct HuffDecoder {
    mincode: [i32; 17],
    maxcode: [i32; 17],
    valptr: [usize; 17],
    vals: Vec<u8>,
}

impl HuffDecoder {
    pub fn new(bits: &[u8; 16], vals: &[u8]) -> HuffDecoder {
        let mut dec = HuffDecoder {
            mincode: [0; 17],
            maxcode: [-1; 17],
            valptr: [0; 17],
            vals: vals.to_vec(),
        };
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16usize {
            let count = bits[len - 1] as i32;
            if count > 0 {
                dec.valptr[len] = k;
                dec.mincode[len] = code;
                code += count;
                k += count as usize;
                dec.maxcode[len] = code - 1;
            } else {
                dec.maxcode[len] = -1;
            }
            code <<= 1;
        }
        dec
    }

    fn decode(&self, r: &mut BitReader) -> Result<u8> {
        let mut code = r.get_bit()? as i32;
        for len in 1..=16usize {
            if self.maxcode[len] >= 0 && code <= self.maxcode[len] {
                let idx = self.valptr[len] + (code - self.mincode[len]) as usize;
                return self
                    .vals
                    .get(idx)
                    .copied()
                    .ok_or_else(|| Error::parse(r.byte_pos(), "huffman index out of range"));
            }
            code = (code << 1) | r.get_bit()? as i32;
        }
        Err(Error::parse(r.byte_pos(), "huffman code longer than 16 bits"))
    }
}

/// MSB-first bit sink; the final partial byte is padded with ones.
#[derive(Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter::default()
    }

    pub fn put_bits(&mut self, value: u32, count: u32) {
        debug_assert!(count <= 24);
        self.acc = (self.acc << count) | (value & ((1 << count) - 1));
        self.nbits += count;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push(((self.acc >> self.nbits) & 0xff) as u8);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put_bits((1 << pad) - 1, pad);
        }
        self.bytes
    }
}

/// MSB-first bit source over a byte slice.
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    bit: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader {
            bytes,
            pos: 0,
            bit: 0,
        }
    }

    pub fn byte_pos(&self) -> usize {
        self.pos
    }

    fn get_bit(&mut self) -> Result<u32> {
        let byte = self
            .bytes
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::parse(self.pos, "bit stream exhausted"))?;
        let b = (byte >> (7 - self.bit)) & 1;
        self.bit += 1;
        if self.bit == 8 {
            self.bit = 0;
            self.pos += 1;
        }
        Ok(b as u32)
    }

    fn get_bits(&mut self, count: u32) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..count {
            v = (v << 1) | self.get_bit()?;
        }
        Ok(v)
    }
}

/// Bits needed for |v| (JPEG size category); 0 for v == 0.
fn category(v: i32) -> u32 {
    32 - (v.unsigned_abs()).leading_zeros()
}

/// JPEG amplitude encoding: negatives stored as v - 1 in `size` bits.
fn amplitude_bits(v: i32, size: u32) -> u32 {
    if v >= 0 {
        v as u32
    } else {
        (v - 1) as u32 & ((1 << size) - 1)
    }
}

/// Inverse of `amplitude_bits` (the EXTEND procedure).
fn extend(bits: u32, size: u32) -> i32 {
    if size == 0 {
        0
    } else if bits < (1 << (size - 1)) {
        bits as i32 - (1 << size) + 1
    } else {
        bits as i32
    }
}

/// Entropy codec for fixed-size coefficient blocks in scan order, with
/// differential DC and run-length AC coding.
pub struct BlockCodec {
    dc_enc: HuffEncoder,
    ac_enc: HuffEncoder,
    dc_dec: HuffDecoder,
    ac_dec: HuffDecoder,
    block_len: usize,
}

impl BlockCodec {
    pub fn luma(block_len: usize) -> BlockCodec {
        BlockCodec {
            dc_enc: HuffEncoder::new(&DC_LUMA_BITS, &DC_LUMA_VALS),
            ac_enc: HuffEncoder::new(&AC_LUMA_BITS, &AC_LUMA_VALS),
            dc_dec: HuffDecoder::new(&DC_LUMA_BITS, &DC_LUMA_VALS),
            ac_dec: HuffDecoder::new(&AC_LUMA_BITS, &AC_LUMA_VALS),
            block_len,
        }
    }

    /// Encodes blocks of quantized coefficients (scan order) into bytes.
    /// DC prediction starts at zero and chains across blocks.
    pub fn encode_blocks(&self, blocks: &[Vec<i32>]) -> Result<Vec<u8>> {
        let mut w = BitWriter::new();
        let mut pred = 0i32;
        for block in blocks {
            if block.len() != self.block_len {
                return Err(Error::DimensionMismatch(
                    "coefficient block has the wrong length".into(),
                ));
            }
            let diff = block[0] - pred;
            pred = block[0];
            let size = category(diff);
            if size > 11 {
                return Err(Error::InvalidInput(format!(
                    "DC difference {diff} exceeds the codable range"
                )));
            }
            self.dc_enc.emit(&mut w, size as u8);
            if size > 0 {
                w.put_bits(amplitude_bits(diff, size), size);
            }
            let mut run = 0u32;
            for &c in &block[1..] {
                if c == 0 {
                    run += 1;
                    continue;
                }
                while run > 15 {
                    self.ac_enc.emit(&mut w, ZRL);
                    run -= 16;
                }
                let size = category(c);
                if size > 10 {
                    return Err(Error::InvalidInput(format!(
                        "AC coefficient {c} exceeds the codable range"
                    )));
                }
                self.ac_enc.emit(&mut w, ((run as u8) << 4) | size as u8);
                w.put_bits(amplitude_bits(c, size), size);
                run = 0;
            }
            if run > 0 {
                self.ac_enc.emit(&mut w, EOB);
            }
        }
        Ok(w.finish())
    }

    /// Decodes `count` blocks. Never reads past the slice; malformed input
    /// comes back as a parse error with the offending byte offset.
    pub fn decode_blocks(&self, bytes: &[u8], count: usize) -> Result<Vec<Vec<i32>>> {
        let mut r = BitReader::new(bytes);
        let mut out = Vec::with_capacity(count);
        let mut pred = 0i32;
        for _ in 0..count {
            let mut block = vec![0i32; self.block_len];
            let size = self.dc_dec.decode(&mut r)? as u32;
            if size > 11 {
                return Err(Error::parse(r.byte_pos(), "invalid DC size category"));
            }
            let diff = extend(r.get_bits(size)?, size);
            pred += diff;
            block[0] = pred;
            let mut k = 1usize;
            while k < self.block_len {
                let symbol = self.ac_dec.decode(&mut r)?;
                if symbol == EOB {
                    break;
                }
                if symbol == ZRL {
                    k += 16;
                    if k > self.block_len {
                        return Err(Error::parse(r.byte_pos(), "ZRL run past block end"));
                    }
                    continue;
                }
                let run = (symbol >> 4) as usize;
                let size = (symbol & 0x0f) as u32;
                if size == 0 || size > 10 {
                    return Err(Error::parse(r.byte_pos(), "invalid AC symbol"));
                }
                k += run;
                if k >= self.block_len {
                    return Err(Error::parse(r.byte_pos(), "AC run past block end"));
                }
                block[k] = extend(r.get_bits(size)?, size);
                k += 1;
            }
            out.push(block);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(category(0), 0);
        assert_eq!(category(1), 1);
        assert_eq!(category(-1), 1);
        assert_eq!(category(2), 2);
        assert_eq!(category(-3), 2);
        assert_eq!(category(1023), 10);
        assert_eq!(category(-1024), 11);
    }

    #[test]
    fn amplitude_roundtrip() {
        for v in -2047..=2047i32 {
            if v == 0 {
                continue;
            }
            let s = category(v);
            assert_eq!(extend(amplitude_bits(v, s), s), v);
        }
    }

    #[test]
    fn blocks_roundtrip() {
        let codec = BlockCodec::luma(64);
        let mut blocks = Vec::new();
        let mut state = 11u64;
        for b in 0..50 {
            let mut block = vec![0i32; 64];
            block[0] = (b * 17) as i32 - 300;
            for k in 1..64 {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                let r = (state >> 33) % 10;
                block[k] = if r < 6 { 0 } else { (state >> 40) as i32 % 200 - 100 };
            }
            blocks.push(block);
        }
        let bytes = codec.encode_blocks(&blocks).unwrap();
        let back = codec.decode_blocks(&bytes, blocks.len()).unwrap();
        assert_eq!(back, blocks);
    }

    #[test]
    fn long_zero_runs_roundtrip() {
        let codec = BlockCodec::luma(64);
        let mut block = vec![0i32; 64];
        block[0] = 5;
        block[40] = -7;
        block[63] = 2;
        let blocks = vec![block.clone(), vec![0i32; 64], block];
        let bytes = codec.encode_blocks(&blocks).unwrap();
        assert_eq!(codec.decode_blocks(&bytes, 3).unwrap(), blocks);
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let codec = BlockCodec::luma(64);
        let blocks = vec![vec![3i32; 64]];
        let bytes = codec.encode_blocks(&blocks).unwrap();
        for cut in 0..bytes.len().saturating_sub(1) {
            match codec.decode_blocks(&bytes[..cut], 1) {
                Ok(decoded) => {
                    // A truncated prefix may still parse if the cut falls
                    // after all meaningful bits; it must not match then.
                    assert_ne!(decoded, blocks);
                }
                Err(Error::Parse { .. }) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn out_of_range_coefficients_rejected() {
        let codec = BlockCodec::luma(64);
        let mut block = vec![0i32; 64];
        block[1] = 5000;
        assert!(codec.encode_blocks(&[block]).is_err());
        let mut block = vec![0i32; 64];
        block[0] = 100_000;
        assert!(codec.encode_blocks(&[block]).is_err());
    }
}
