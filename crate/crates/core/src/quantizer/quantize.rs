use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::density::{Density, DENSITY_BINS};
use crate::quantizer::levels::{optimal_levels, uniform_levels, Scheme};
use crate::rng;
use crate::sparsity::Bitset;

const STOCHASTIC: u64 = 0x0A17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Closest level; exact midpoints go to the lower level.
    Nearest,
    /// Up with probability `(w − low)/(high − low)`, so the expected
    /// dequantized value is `w`.
    Stochastic,
}

/// A level table and the rule for mapping weights onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationSpec {
    pub scheme: Scheme,
    /// Code width. 0 marks a single-level table (constant weights); the
    /// identity scheme uses 64.
    pub bits: u32,
    pub rounding: Rounding,
    /// Code `i` dequantizes to `levels[i]`. Empty for the identity scheme.
    pub levels: Vec<f64>,
    pub seed: u64,
    /// Histogram resolution the optimal levels were fitted on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_bins: Option<usize>,
}

impl QuantizationSpec {
    /// Fits levels to `values` (the surviving weights of one tensor).
    pub fn build(
        scheme: Scheme,
        bits: u32,
        rounding: Rounding,
        values: &[f64],
        seed: u64,
    ) -> Result<Self> {
        if scheme == Scheme::Identity {
            return Ok(QuantizationSpec {
                scheme,
                bits: 64,
                rounding,
                levels: Vec::new(),
                seed,
                density_bins: None,
            });
        }
        if values.is_empty() {
            return Err(Error::Empty("no surviving weights to quantize".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weights".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Ok(QuantizationSpec::single(lo, rounding, seed, scheme));
        }
        let (levels, density_bins) = match scheme {
            Scheme::OptimalDensity => {
                let (levels, bins) = fit_optimal(values, bits)?;
                (levels, Some(bins))
            }
            _ => (uniform_levels(lo, hi, bits, scheme)?, None),
        };
        let spec = QuantizationSpec {
            scheme,
            bits,
            rounding,
            levels,
            seed,
            density_bins,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Degenerate table holding one value.
    pub fn single(value: f64, rounding: Rounding, seed: u64, scheme: Scheme) -> Self {
        QuantizationSpec {
            scheme,
            bits: 0,
            rounding,
            levels: vec![value],
            seed,
            density_bins: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::Identity {
            if self.bits != 64 || !self.levels.is_empty() {
                return Err(Error::InvalidArgument("identity spec takes no levels and 64 bits".into()));
            }
            return Ok(());
        }
        if self.bits > 16 {
            return Err(Error::InvalidArgument(format!("{} bits is too wide for a LUT", self.bits)));
        }
        if self.levels.len() != 1usize << self.bits {
            return Err(Error::InvalidArgument(format!(
                "{} levels for {} bits",
                self.levels.len(),
                self.bits
            )));
        }
        if self.levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("levels".into()));
        }
        if self.levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("levels must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.scheme == Scheme::Identity
    }

    /// Number of distinct codes.
    pub fn code_space(&self) -> u64 {
        if self.is_identity() {
            u64::MAX
        } else {
            self.levels.len() as u64
        }
    }

    /// Rounds every level to the nearest f32, as stored in packed files.
    pub fn round_levels_to_f32(&mut self) -> Result<()> {
        for l in &mut self.levels {
            *l = *l as f32 as f64;
        }
        self.validate()
            .map_err(|_| Error::InvalidArgument("levels collide after rounding to f32".into()))
    }
}

/// Optimal levels on the standard 256-bin estimate. A small sample spread
/// over many bins gives a comb of isolated spikes on which the balance
/// equations may have no reachable solution; the histogram is then halved
/// until the solver converges. Returns the levels and the bin count used.
pub fn fit_optimal(values: &[f64], bits: u32) -> Result<(Vec<f64>, usize)> {
    let mut bins = DENSITY_BINS;
    loop {
        match optimal_levels(&Density::from_values(values, bins)?, bits) {
            Ok(levels) => return Ok((levels, bins)),
            Err(Error::NoConvergence { .. }) if bins > 2 => bins /= 2,
            Err(e) => return Err(e),
        }
    }
}

/// Index of the closest level; ties go low. Values outside the table clip.
pub fn nearest_code(levels: &[f64], w: f64) -> usize {
    let i = levels.partition_point(|&l| l <= w);
    if i == 0 {
        return 0;
    }
    if i == levels.len() {
        return levels.len() - 1;
    }
    let (lo, hi) = (levels[i - 1], levels[i]);
    if w - lo <= hi - w {
        i - 1
    } else {
        i
    }
}

/// Codes for the surviving entries of `weights` (positions set in `mask`
/// are skipped). `stream` selects the stochastic-rounding RNG stream, one
/// per tensor.
pub fn quantize(
    weights: &[f64],
    mask: Option<&Bitset>,
    spec: &QuantizationSpec,
    stream: u64,
) -> Result<Vec<u64>> {
    spec.validate()?;
    if let Some(m) = mask {
        if m.len() != weights.len() {
            return Err(Error::Shape(format!(
                "mask of {} for {} weights",
                m.len(),
                weights.len()
            )));
        }
    }
    let survivors: Vec<f64> = match mask {
        Some(m) => weights
            .iter()
            .enumerate()
            .filter(|(i, _)| !m.get(*i))
            .map(|(_, &w)| w)
            .collect(),
        None => weights.to_vec(),
    };
    if survivors.is_empty() {
        return Err(Error::Empty("no surviving weights to quantize".into()));
    }
    if survivors.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weights".into()));
    }
    if spec.is_identity() {
        return Ok(survivors.iter().map(|w| w.to_bits()).collect());
    }
    let levels = &spec.levels;
    match spec.rounding {
        Rounding::Nearest => Ok(survivors.iter().map(|&w| nearest_code(levels, w) as u64).collect()),
        Rounding::Stochastic => {
            let mut r = rng::stream(spec.seed, &[STOCHASTIC, stream]);
            Ok(survivors
                .iter()
                .map(|&w| {
                    let u: f64 = r.random();
                    let i = levels.partition_point(|&l| l <= w);
                    if i == 0 {
                        return 0;
                    }
                    if i == levels.len() {
                        return (levels.len() - 1) as u64;
                    }
                    let (lo, hi) = (levels[i - 1], levels[i]);
                    let p_up = (w - lo) / (hi - lo);
                    if u < p_up {
                        i as u64
                    } else {
                        (i - 1) as u64
                    }
                })
                .collect())
        }
    }
}

/// Table lookup of each code.
pub fn dequantize(codes: &[u64], spec: &QuantizationSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.is_identity() {
        return Ok(codes.iter().map(|&c| f64::from_bits(c)).collect());
    }
    codes
        .iter()
        .map(|&c| {
            spec.levels.get(c as usize).copied().ok_or(Error::CodeOutOfRange {
                code: c,
                size: spec.levels.len() as u64,
            })
        })
        .collect()
}
