//! Shared oracles for integration tests.
#![allow(dead_code)]

use devolve_core::nn::Network;
use devolve_core::quantizer::{Density, QuantizationSpec, QuantizedModel, QuantizedTensor, Rounding, Scheme};
use devolve_core::rng;
use devolve_core::sparsity::Bitset;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Independent evaluation of the L1 quantization error: fine midpoint-rule
/// prefix sums of `p` and `w·p`, queried per rounding region.
pub struct ErrorOracle {
    lo: f64,
    step: f64,
    mass: Vec<f64>,
    moment: Vec<f64>,
}

impl ErrorOracle {
    pub fn new(d: &Density, samples: usize) -> Self {
        let (lo, hi) = (d.lo(), d.hi());
        let step = (hi - lo) / samples as f64;
        let mut mass = vec![0.0; samples + 1];
        let mut moment = vec![0.0; samples + 1];
        for i in 0..samples {
            let w = lo + (i as f64 + 0.5) * step;
            let p = d.eval(w) * step;
            mass[i + 1] = mass[i] + p;
            moment[i + 1] = moment[i] + w * p;
        }
        ErrorOracle { lo, step, mass, moment }
    }

    fn prefix(&self, table: &[f64], x: f64) -> f64 {
        let pos = ((x - self.lo) / self.step).clamp(0.0, (table.len() - 1) as f64);
        let i = (pos.floor() as usize).min(table.len() - 2);
        let t = pos - i as f64;
        table[i] + t * (table[i + 1] - table[i])
    }

    fn between(&self, a: f64, b: f64) -> (f64, f64) {
        (
            self.prefix(&self.mass, b) - self.prefix(&self.mass, a),
            self.prefix(&self.moment, b) - self.prefix(&self.moment, a),
        )
    }

    pub fn error(&self, levels: &[f64]) -> f64 {
        let hi = self.lo + self.step * (self.mass.len() - 1) as f64;
        let mut total = 0.0;
        for (i, &q) in levels.iter().enumerate() {
            let a = if i == 0 { self.lo } else { 0.5 * (levels[i - 1] + q) };
            let b = if i + 1 == levels.len() { hi } else { 0.5 * (q + levels[i + 1]) };
            let (a, b) = (a.clamp(self.lo, hi), b.clamp(self.lo, hi));
            let m = q.clamp(a, b);
            let (p0, w0) = self.between(a, m);
            let (p1, w1) = self.between(m, b);
            total += (q * p0 - w0) + (w1 - q * p1);
        }
        total
    }

    /// Exhaustive search over two interior levels on a grid of `pitch`,
    /// endpoints pinned. Returns the best levels and their error.
    pub fn brute_force_two_bit(&self, pitch: f64) -> ([f64; 4], f64) {
        let hi = self.lo + self.step * (self.mass.len() - 1) as f64;
        let steps = ((hi - self.lo) / pitch).round() as usize;
        let mut best = ([0.0; 4], f64::INFINITY);
        for i in 1..steps {
            let a = self.lo + i as f64 * pitch;
            for j in i + 1..steps {
                let b = self.lo + j as f64 * pitch;
                let levels = [self.lo, a, b, hi];
                let e = self.error(&levels);
                if e < best.1 {
                    best = (levels, e);
                }
            }
        }
        best
    }
}

pub fn triangular() -> Density {
    Density::from_fn(0.0, 1.0, 256, |w| 2.0 * w).unwrap()
}

pub fn bimodal() -> Density {
    let g = |w: f64, m: f64| (-(w - m) * (w - m) / (2.0 * 0.08 * 0.08)).exp();
    Density::from_fn(0.0, 1.0, 256, |w| g(w, 0.25) + g(w, 0.75)).unwrap()
}

pub fn shannon(freqs: &[u64]) -> f64 {
    let total = freqs.iter().sum::<u64>() as f64;
    freqs
        .iter()
        .filter(|&&f| f > 0)
        .map(|&f| {
            let p = f as f64 / total;
            -p * p.log2()
        })
        .sum()
}

pub fn random_tensor(r: &mut ChaCha8Rng) -> QuantizedTensor {
    let rank = r.random_range(1..=3);
    let mut shape: Vec<usize> = (0..rank).map(|_| r.random_range(1..12)).collect();
    if r.random_range(0..50) == 0 {
        shape[0] = 0;
    }
    let len: usize = shape.iter().product();
    let p = [0.0, 0.1, 0.5, 0.9, 1.0][r.random_range(0..5)];
    let mask = Bitset::from_bools(&(0..len).map(|_| r.random::<f64>() < p).collect::<Vec<_>>());
    let survivors = len - mask.count_ones();
    let scheme = [Scheme::UniformScale, Scheme::UniformAffine, Scheme::OptimalDensity, Scheme::Identity]
        [r.random_range(0..4)];
    let rounding = if r.random() { Rounding::Nearest } else { Rounding::Stochastic };
    let seed = r.random();
    if scheme == Scheme::Identity {
        let f32_exact: bool = r.random();
        let codes = (0..survivors)
            .map(|_| {
                let v: f64 = r.random_range(-3.0..3.0);
                if f32_exact { (v as f32 as f64).to_bits() } else { v.to_bits() }
            })
            .collect();
        let spec = QuantizationSpec {
            scheme,
            bits: 64,
            rounding,
            levels: Vec::new(),
            seed,
            density_bins: None,
        };
        return QuantizedTensor { shape, mask, spec, codes };
    }
    let bits = r.random_range(0..=8u32);
    let n = 1usize << bits;
    let mut levels: Vec<f64> = Vec::with_capacity(n);
    let mut v = r.random_range(-2.0f32..0.0);
    for _ in 0..n {
        levels.push(v as f64);
        v += r.random_range(1e-3f32..0.1);
    }
    // skewed symbol usage so code lengths vary
    let skew: f64 = r.random_range(0.5..4.0);
    let codes = (0..survivors)
        .map(|_| ((r.random::<f64>().powf(skew) * n as f64) as u64).min(n as u64 - 1))
        .collect();
    let density_bins = (scheme == Scheme::OptimalDensity).then(|| 1usize << r.random_range(1..=8));
    let spec = QuantizationSpec {
        scheme,
        bits,
        rounding,
        levels,
        seed,
        density_bins,
    };
    QuantizedTensor { shape, mask, spec, codes }
}

pub fn random_model(seed: u64, layers: usize) -> QuantizedModel {
    let mut r = rng::stream(seed, &[0x9AC]);
    QuantizedModel {
        tensors: (0..layers).map(|_| random_tensor(&mut r)).collect(),
    }
}

/// Model whose tensors keep about `keep` of their entries, rounded to a
/// multiple of 16 so every 4-bit symbol is used equally often.
pub fn uniform_four_bit(net: &Network, keep: f64, seed: u64) -> QuantizedModel {
    let mut r = rng::stream(seed, &[4]);
    let levels: Vec<f64> = (0..16).map(|i| (i as f32 * 0.125 - 1.0) as f64).collect();
    let tensors = net
        .params()
        .iter()
        .map(|p| {
            let len = p.len();
            let survivors = (len as f64 * keep / 16.0).round() as usize * 16;
            let mut order: Vec<usize> = (0..len).collect();
            order.shuffle(&mut r);
            let mut pruned = vec![true; len];
            for &i in &order[..survivors] {
                pruned[i] = false;
            }
            let mask = Bitset::from_bools(&pruned);
            let mut codes: Vec<u64> = (0..survivors).map(|i| (i % 16) as u64).collect();
            codes.shuffle(&mut r);
            QuantizedTensor {
                shape: p.shape().to_vec(),
                mask,
                spec: QuantizationSpec {
                    scheme: Scheme::UniformAffine,
                    bits: 4,
                    rounding: Rounding::Stochastic,
                    levels: levels.clone(),
                    seed,
                    density_bins: None,
                },
                codes,
            }
        })
        .collect();
    QuantizedModel { tensors }
}

/// Five weight-like shapes: normal, uniform, bimodal, Laplace, heavy-tailed.
pub fn seeded_density(seed: u64) -> Density {
    let mut r = rng::stream(seed, &[1]);
    let n = Normal::new(0.0, 1.0).unwrap();
    let values: Vec<f64> = (0..20_000)
        .map(|_| match seed % 5 {
            0 => n.sample(&mut r),
            1 => r.random_range(-1.0..1.0),
            2 => {
                let s = if r.random::<bool>() { 1.0 } else { -1.0 };
                s * (2.0 + 0.3 * n.sample(&mut r))
            }
            3 => -r.random::<f64>().ln() * if r.random::<bool>() { 1.0 } else { -1.0 },
            _ => n.sample(&mut r).powi(3),
        })
        .collect();
    Density::from_values(&values, 256).unwrap()
}
