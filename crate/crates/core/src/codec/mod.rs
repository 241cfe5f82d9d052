//! Lossless packing of quantized models: canonical Huffman coding of the
//! level codes, bitmap or run-length masks, and the CRC-checked container.

mod bits;
mod huffman;
mod mask;
mod packed;

pub use bits::{read_varint, write_varint, BitReader, BitWriter};
pub use huffman::{entropy, HuffmanTable};
pub use mask::{
    bitmap, decode_mask, encode_mask, load_mask, mask_from_bytes, mask_to_bytes, run_lengths, save_mask, MaskEncoding,
};
pub use packed::{compression_report, decode_layer, encode_layer, CompressionReport, LayerStats, PackedModel};
