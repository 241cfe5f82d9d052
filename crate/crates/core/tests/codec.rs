mod common;

use common::{random_model, random_tensor, shannon, uniform_four_bit};
use devolve_core::codec::{
    bitmap, compression_report, decode_layer, decode_mask, encode_layer, encode_mask, run_lengths, BitReader,
    BitWriter, HuffmanTable, MaskEncoding, PackedModel,
};
use devolve_core::nn::Architecture;
use devolve_core::quantizer::{QuantizationSpec, QuantizedModel, QuantizedTensor, Rounding, Scheme};
use devolve_core::rng;
use devolve_core::sparsity::Bitset;
use devolve_core::Error;
use rand::Rng;

fn is_prefix_free(t: &HuffmanTable) -> bool {
    let words: Vec<(u64, u8)> = (0..t.alphabet() as u64).filter_map(|s| t.code(s)).collect();
    for (i, &(a, la)) in words.iter().enumerate() {
        for &(b, lb) in &words[i + 1..] {
            let l = la.min(lb);
            if a >> (la - l) == b >> (lb - l) {
                return false;
            }
        }
    }
    true
}

#[test]
fn two_equal_symbols_get_one_bit_each() {
    let t = HuffmanTable::build(&[1, 1]).unwrap();
    assert_eq!(t.lengths(), &[1, 1]);
}

#[test]
fn lone_symbol_gets_one_bit() {
    let t = HuffmanTable::build(&[0, 0, 7, 0]).unwrap();
    assert_eq!(t.lengths(), &[0, 0, 1, 0]);
    let mut w = BitWriter::new();
    t.encode(&[2, 2, 2], &mut w).unwrap();
    let (bytes, n) = w.finish();
    assert_eq!(n, 3);
    assert_eq!(t.decode(&mut BitReader::new(&bytes, n).unwrap(), 3).unwrap(), vec![2, 2, 2]);
}

#[test]
fn empty_frequencies_are_an_error() {
    assert!(matches!(HuffmanTable::build(&[]), Err(Error::Empty(_))));
    assert!(matches!(HuffmanTable::build(&[0, 0]), Err(Error::Empty(_))));
}

#[test]
fn symbol_without_code_is_an_error() {
    let t = HuffmanTable::build(&[3, 0, 1]).unwrap();
    let mut w = BitWriter::new();
    assert!(matches!(t.encode(&[1], &mut w), Err(Error::CodeOutOfRange { code: 1, .. })));
    assert!(t.encode(&[9], &mut w).is_err());
}

#[test]
fn sixteen_symbol_codes_are_within_one_bit_of_entropy() {
    for seed in 0..200u64 {
        let mut r = rng::stream(seed, &[16]);
        let skew: f64 = r.random_range(0.0..4.0);
        let freqs: Vec<u64> = (0..16)
            .map(|_| (r.random::<f64>().powf(skew) * 1000.0) as u64 + r.random_range(0..2))
            .collect();
        if freqs.iter().all(|&f| f == 0) {
            continue;
        }
        let t = HuffmanTable::build(&freqs).unwrap();
        let h = shannon(&freqs);
        let avg = t.average_length(&freqs);
        assert!(avg >= h - 1e-12 && avg < h + 1.0, "seed {seed}: H {h} avg {avg}");
        assert!(t.kraft_sum() <= 1.0 + 1e-15);
        assert!(is_prefix_free(&t));
        assert_eq!(devolve_core::codec::entropy(&freqs), h);
    }
}

#[test]
fn mask_encoder_picks_the_smaller_form() {
    // all pruned: a single run beats 125 bitmap bytes
    let all = Bitset::full(1000);
    let (enc, bytes) = encode_mask(&all);
    assert_eq!(enc, MaskEncoding::RunLength);
    assert_eq!(decode_mask(enc, &bytes, 1000).unwrap(), all);
    // alternating bits: runs cost a byte per bit
    let alt = Bitset::from_bools(&(0..64).map(|i| i % 2 == 0).collect::<Vec<_>>());
    assert_eq!(encode_mask(&alt).0, MaskEncoding::Bitmap);
    // 8 pruned: one byte either way, so the bitmap
    let tie = Bitset::full(8);
    assert_eq!(bitmap(&tie).len(), run_lengths(&tie).len());
    assert_eq!(encode_mask(&tie).0, MaskEncoding::Bitmap);
    for seed in 0..200u64 {
        let mut r = rng::stream(seed, &[0x4D]);
        let len = r.random_range(0..300);
        let p: f64 = r.random();
        let m = Bitset::from_bools(&(0..len).map(|_| r.random::<f64>() < p).collect::<Vec<_>>());
        let (enc, bytes) = encode_mask(&m);
        assert_eq!(bytes.len(), bitmap(&m).len().min(run_lengths(&m).len()));
        assert_eq!(decode_mask(enc, &bytes, len).unwrap(), m);
    }
}

#[test]
fn thousand_random_layers_round_trip() {
    let mut r = rng::stream(2024, &[0xC0DE]);
    for case in 0..1000 {
        let t = random_tensor(&mut r);
        let (bytes, stats) = encode_layer(&t).unwrap();
        let (back, read_stats) = decode_layer(&bytes).unwrap();
        assert_eq!(back, t, "case {case}");
        assert_eq!(read_stats, stats, "case {case}");
        assert_eq!(stats.bytes, bytes.len());
        assert_eq!(back.values().unwrap(), t.values().unwrap());
        if !t.spec.is_identity() && !t.codes.is_empty() {
            let mut freqs = vec![0u64; t.spec.levels.len()];
            for &c in &t.codes {
                freqs[c as usize] += 1;
            }
            let h = shannon(&freqs);
            let avg = stats.payload_bits as f64 / t.codes.len() as f64;
            if freqs.iter().filter(|&&f| f > 0).count() == 1 {
                // a lone symbol still costs one bit, so H + 1 is reached
                assert_eq!(avg, 1.0, "case {case}");
            } else {
                assert!(avg >= h - 1e-9 && avg < h + 1.0, "case {case}: H {h} avg {avg}");
            }
        }
    }
}

#[test]
fn all_pruned_layer_has_an_empty_payload() {
    let t = QuantizedTensor {
        shape: vec![40, 10],
        mask: Bitset::full(400),
        spec: QuantizationSpec::single(0.0, Rounding::Nearest, 0, Scheme::UniformAffine),
        codes: Vec::new(),
    };
    let (bytes, stats) = encode_layer(&t).unwrap();
    assert_eq!(stats.mask_encoding, MaskEncoding::RunLength);
    assert_eq!(stats.payload_bits, 0);
    assert_eq!(decode_layer(&bytes).unwrap().0, t);
}

#[test]
fn dense_layer_codes_every_weight() {
    let spec = QuantizationSpec {
        scheme: Scheme::UniformAffine,
        bits: 2,
        rounding: Rounding::Nearest,
        levels: vec![-1.0, -0.5, 0.5, 1.0],
        seed: 0,
        density_bins: None,
    };
    let t = QuantizedTensor {
        shape: vec![100],
        mask: Bitset::new(100),
        spec,
        codes: (0..100).map(|i| i % 4).collect(),
    };
    let (bytes, stats) = encode_layer(&t).unwrap();
    assert_eq!(stats.survivors, 100);
    assert_eq!(stats.payload_bits, 200);
    assert_eq!(decode_layer(&bytes).unwrap().0, t);
}

#[test]
fn packed_model_round_trips_and_rejects_every_single_bit_flip() {
    let model = random_model(5, 6);
    let packed = PackedModel::pack(&model).unwrap();
    let bytes = packed.bytes().to_vec();
    assert_eq!(&bytes[..4], b"DEVP");
    let back = PackedModel::from_bytes(bytes.clone()).unwrap();
    assert_eq!(back.unpack().unwrap(), model);
    assert_eq!(back.layers(), packed.layers());
    for bit in 0..bytes.len() * 8 {
        let mut bad = bytes.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        assert!(PackedModel::from_bytes(bad).is_err(), "flip of bit {bit} went unnoticed");
    }
}

#[test]
fn truncation_is_detected() {
    let bytes = PackedModel::pack(&random_model(6, 3)).unwrap().bytes().to_vec();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(PackedModel::from_bytes(bytes[..cut].to_vec()).is_err());
    }
}

#[test]
fn packing_is_independent_of_workers() {
    let model = random_model(8, 12);
    let seq = PackedModel::pack(&model).unwrap();
    for w in [0, 2, 4] {
        let exec = devolve_core::par::Executor::new(w).unwrap();
        assert_eq!(PackedModel::pack_with(&model, &exec).unwrap(), seq);
    }
}

#[test]
fn ninety_percent_four_bit_accounting() {
    // 784·128 + 128 + 128·10 + 10 = 101 770 parameters
    let net = Architecture::mlp(&[784, 128, 10]).build(1).unwrap();
    assert_eq!(net.param_count(), 101_770);
    let packed = PackedModel::pack(&uniform_four_bit(&net, 0.1, 3)).unwrap();
    let rep = compression_report(&net, &packed).unwrap();
    let survivors: usize = packed.layers().iter().map(|l| l.survivors).sum();
    // uniform usage of 16 symbols: every codeword is 4 bits
    assert_eq!(rep.payload_bits, 4 * survivors as u64);
    let expected = 32.0 * 101_770.0 / (4.0 * survivors as f64);
    assert!((rep.payload_ratio - expected).abs() < 1e-12);
    assert!((rep.payload_ratio - 80.0).abs() < 0.5, "{}", rep.payload_ratio);
    // bitmap-or-better masks: total is at least the 1-bit-per-parameter figure
    assert_eq!(rep.total_bits, packed.bytes().len() as u64 * 8);
    assert!(rep.total_ratio >= 20.0, "{}", rep.total_ratio);
    let bitmap_only = 32.0 / (0.1 * 4.0 + 1.0);
    assert!(rep.total_ratio > 0.95 * bitmap_only, "{} vs {bitmap_only}", rep.total_ratio);
}

#[test]
fn dense_identity_path_is_about_one() {
    let mut net = Architecture::mlp(&[64, 64, 10]).build(2).unwrap();
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v = *v as f32 as f64;
        }
    }
    let spec = QuantizationSpec::build(Scheme::Identity, 0, Rounding::Nearest, &[], 0).unwrap();
    let tensors = net
        .params()
        .iter()
        .map(|p| QuantizedTensor {
            shape: p.shape().to_vec(),
            mask: Bitset::new(p.len()),
            spec: spec.clone(),
            codes: p.data().iter().map(|v| v.to_bits()).collect(),
        })
        .collect();
    let model = QuantizedModel { tensors };
    let packed = PackedModel::pack(&model).unwrap();
    let rep = compression_report(&net, &packed).unwrap();
    assert_eq!(rep.payload_ratio, 1.0);
    assert!(rep.total_ratio > 0.98 && rep.total_ratio < 1.0, "{}", rep.total_ratio);
    assert_eq!(model.to_network(&net).unwrap(), net);
}

#[test]
fn report_rejects_a_different_network() {
    let net = Architecture::mlp(&[8, 4]).build(0).unwrap();
    let other = Architecture::mlp(&[8, 5]).build(0).unwrap();
    let packed = PackedModel::pack(&uniform_four_bit(&net, 0.5, 0)).unwrap();
    assert!(compression_report(&other, &packed).is_err());
}

#[test]
fn crc_mismatch_is_reported_as_such() {
    let mut bytes = PackedModel::pack(&random_model(1, 2)).unwrap().bytes().to_vec();
    let n = bytes.len();
    bytes[n - 1] ^= 0x01;
    assert!(matches!(PackedModel::from_bytes(bytes), Err(Error::Crc { .. })));
}
