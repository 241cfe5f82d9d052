use crate::de::Histogram;
use crate::error::{Error, Result};

/// Relative floor applied to bin heights so the density never vanishes on
/// its support.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Default bin count when estimating from weights.
pub const DENSITY_BINS: usize = 256;

/// Piecewise-linear weight density over `[lo, hi]`. Bin masses sum to 1;
/// `p(w)` interpolates the bin heights between bin centres and is held
/// constant in the outer half bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    lo: f64,
    hi: f64,
    masses: Vec<f64>,
    centers: Vec<f64>,
    heights: Vec<f64>,
}

impl Density {
    /// Builds from nonnegative bin masses over equal-width bins. Masses are
    /// floored at `DENSITY_FLOOR` of the peak and renormalised.
    pub fn from_masses(lo: f64, hi: f64, masses: &[f64]) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFinite("density range".into()));
        }
        if !(lo < hi) {
            return Err(Error::DegenerateRange { lo, hi });
        }
        if masses.is_empty() {
            return Err(Error::Empty("density bins".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument("bin masses must be finite and >= 0".into()));
        }
        let peak = masses.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            return Err(Error::InvalidArgument("density has no mass".into()));
        }
        let floored: Vec<f64> = masses.iter().map(|&m| m.max(DENSITY_FLOOR * peak)).collect();
        let total: f64 = floored.iter().sum();
        let masses: Vec<f64> = floored.iter().map(|m| m / total).collect();
        let width = (hi - lo) / masses.len() as f64;
        let centers = (0..masses.len()).map(|i| lo + (i as f64 + 0.5) * width).collect();
        let heights = masses.iter().map(|m| m / width).collect();
        Ok(Density {
            lo,
            hi,
            masses,
            centers,
            heights,
        })
    }

    /// Histogram estimate from sample values.
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        let h = Histogram::from_values(values, bins)?;
        if h.lo == h.hi {
            return Err(Error::DegenerateRange { lo: h.lo, hi: h.hi });
        }
        let masses: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
        Density::from_masses(h.lo, h.hi, &masses)
    }

    /// Discretises an analytic density: each bin gets the integral of `f`
    /// over it.
    pub fn from_fn(lo: f64, hi: f64, bins: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Empty("density bins".into()));
        }
        let width = (hi - lo) / bins as f64;
        let masses: Vec<f64> = (0..bins)
            .map(|i| {
                let a = lo + i as f64 * width;
                let sub = 16;
                let h = width / sub as f64;
                (0..sub)
                    .map(|s| {
                        let x = a + s as f64 * h;
                        h / 6.0 * (f(x) + 4.0 * f(x + h / 2.0) + f(x + h))
                    })
                    .sum::<f64>()
            })
            .collect();
        Density::from_masses(lo, hi, &masses)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Interpolation knots (bin centres).
    pub fn knots(&self) -> &[f64] {
        &self.centers
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn peak(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    /// Index `i` such that `knots[i] <= w < knots[i+1]`; `None` outside the
    /// knot span.
    fn segment(&self, w: f64) -> Option<usize> {
        let k = &self.centers;
        if w < k[0] || w >= k[k.len() - 1] {
            return None;
        }
        Some(k.partition_point(|&x| x <= w) - 1)
    }

    pub fn eval(&self, w: f64) -> f64 {
        match self.segment(w) {
            None if w < self.centers[0] => self.heights[0],
            None => self.heights[self.heights.len() - 1],
            Some(i) => {
                let t = (w - self.centers[i]) / (self.centers[i + 1] - self.centers[i]);
                self.heights[i] + t * (self.heights[i + 1] - self.heights[i])
            }
        }
    }

    /// Slope of `p` at `w` (right derivative at knots).
    pub fn slope(&self, w: f64) -> f64 {
        match self.segment(w) {
            None => 0.0,
            Some(i) => {
                (self.heights[i + 1] - self.heights[i]) / (self.centers[i + 1] - self.centers[i])
            }
        }
    }

    /// Point below which `q` of the bin mass lies, linear within bins.
    pub fn quantile(&self, q: f64) -> f64 {
        let width = (self.hi - self.lo) / self.masses.len() as f64;
        let mut acc = 0.0;
        for (i, &m) in self.masses.iter().enumerate() {
            if acc + m >= q {
                let frac = if m > 0.0 { (q - acc) / m } else { 0.0 };
                return self.lo + (i as f64 + frac.clamp(0.0, 1.0)) * width;
            }
            acc += m;
        }
        self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masses_normalised_and_floored() {
        let d = Density::from_masses(0.0, 4.0, &[0.0, 2.0, 6.0, 0.0]).unwrap();
        let sum: f64 = d.masses().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(d.heights().iter().all(|&h| h >= DENSITY_FLOOR * d.peak() * (1.0 - 1e-12)));
        for w in [0.0, 0.3, 1.7, 3.99, 4.0] {
            assert!(d.eval(w) > 0.0);
        }
    }

    #[test]
    fn interpolates_between_centres() {
        let d = Density::from_masses(0.0, 2.0, &[1.0, 3.0]).unwrap();
        // heights 0.25 and 0.75 at centres 0.5 and 1.5
        assert!((d.eval(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(d.eval(0.1), 0.25);
        assert_eq!(d.eval(1.9), 0.75);
        assert!((d.slope(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(d.slope(0.2), 0.0);
    }

    #[test]
    fn degenerate_and_invalid() {
        assert!(matches!(
            Density::from_values(&[2.0, 2.0], 8),
            Err(Error::DegenerateRange { .. })
        ));
        assert!(Density::from_masses(0.0, 1.0, &[0.0, 0.0]).is_err());
        assert!(Density::from_masses(0.0, 1.0, &[-1.0, 2.0]).is_err());
    }

    #[test]
    fn quantiles_of_uniform() {
        let d = Density::from_masses(-1.0, 1.0, &[1.0; 10]).unwrap();
        assert!((d.quantile(0.25) + 0.5).abs() < 1e-12);
        assert!((d.quantile(0.5)).abs() < 1e-12);
    }
}
