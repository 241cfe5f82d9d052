use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::density::Density;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Symmetric signed codes `i·Δ`; zero is a level and the range may clip.
    UniformScale,
    /// `2^bits` equal steps from min to max.
    UniformAffine,
    /// Spacing inversely proportional to the weight density at each gap's
    /// midpoint.
    OptimalDensity,
    /// No quantization: codes are the raw f64 bit patterns.
    Identity,
}

fn level_count(bits: u32) -> Result<usize> {
    if bits == 0 || bits > 16 {
        return Err(Error::InvalidArgument(format!("bits must be in 1..=16, got {bits}")));
    }
    Ok(1usize << bits)
}

/// Evenly spaced levels for the two uniform schemes.
pub fn uniform_levels(lo: f64, hi: f64, bits: u32, scheme: Scheme) -> Result<Vec<f64>> {
    let n = level_count(bits)?;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("level range".into()));
    }
    if !(lo < hi) {
        return Err(Error::DegenerateRange { lo, hi });
    }
    match scheme {
        Scheme::UniformAffine => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
            v[n - 1] = hi;
            Ok(v)
        }
        Scheme::UniformScale => {
            if bits < 2 {
                return Err(Error::InvalidArgument(
                    "uniform_scale needs at least 2 bits (Δ = max|w| / (2^(bits-1) - 1))".into(),
                ));
            }
            let half = (n / 2) as i64;
            let delta = lo.abs().max(hi.abs()) / (half - 1) as f64;
            Ok((-half..half).map(|i| i as f64 * delta).collect())
        }
        other => Err(Error::InvalidArgument(format!("{other:?} is not a uniform scheme"))),
    }
}

/// Solution of the optimal-spacing condition
/// `(l − k)·p((k + l)/2) = (m − l)·p((l + m)/2) = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalLevels {
    pub levels: Vec<f64>,
    /// Mean of the per-gap products `gap·p(midpoint)`.
    pub c: f64,
    /// Largest difference between adjacent gap products, relative to `c`.
    pub residual: f64,
}

const ACCEPT: f64 = 1e-9;
const TOLERATE: f64 = 1e-6;

fn gap_products(d: &Density, levels: &[f64]) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| (w[1] - w[0]) * d.eval(0.5 * (w[0] + w[1])))
        .collect()
}

fn assess(d: &Density, levels: Vec<f64>) -> OptimalLevels {
    let prods = gap_products(d, &levels);
    let c = prods.iter().sum::<f64>() / prods.len() as f64;
    let worst = prods
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    let ordered = levels.windows(2).all(|w| w[0] < w[1]);
    OptimalLevels {
        levels,
        c,
        residual: if ordered && c > 0.0 { worst / c } else { f64::INFINITY },
    }
}

/// Smallest `g > 0` with `g·p(l + g/2) = c`. `p` is linear between knots,
/// so each knot segment reduces to a quadratic in `g`.
fn first_gap(d: &Density, l: f64, c: f64) -> f64 {
    let knots = d.knots();
    let heights = d.heights();
    let k = knots.len();
    // segment boundaries for the midpoint, starting at l
    let mut start = l;
    let mut seg = knots.partition_point(|&x| x <= l);
    loop {
        let end = if seg < k { knots[seg] } else { f64::INFINITY };
        // p(m) = a + s·(m − l) on [start, end] with m = l + g/2
        let (a, s) = if seg == 0 {
            (heights[0], 0.0)
        } else if seg >= k {
            (heights[k - 1], 0.0)
        } else {
            let s = (heights[seg] - heights[seg - 1]) / (knots[seg] - knots[seg - 1]);
            (heights[seg - 1] + s * (l - knots[seg - 1]), s)
        };
        let (alpha, beta) = (a, s / 2.0);
        let (ga, gb) = (2.0 * (start - l), 2.0 * (end - l));
        if let Some(g) = smallest_root_in(beta, alpha, c, ga, gb) {
            return g;
        }
        start = end;
        seg += 1;
    }
}

/// Smallest root of `β g² + α g = c` within `[ga, gb]`.
fn smallest_root_in(beta: f64, alpha: f64, c: f64, ga: f64, gb: f64) -> Option<f64> {
    let span = if gb.is_finite() { gb } else { ga };
    let slack = 1e-12 * span.max(1e-300);
    let inside = |g: f64| g >= ga - slack && g <= gb + slack;
    let mut roots = Vec::with_capacity(2);
    if beta.abs() <= 1e-300 || (beta * c).abs() < 1e-18 * alpha * alpha {
        if alpha > 0.0 {
            roots.push(c / alpha);
        }
    } else {
        let disc = alpha * alpha + 4.0 * beta * c;
        if disc < 0.0 {
            return None;
        }
        let q = -0.5 * (alpha + alpha.signum() * disc.sqrt());
        if q != 0.0 {
            roots.push(q / beta);
            roots.push(-c / q);
        }
    }
    roots
        .into_iter()
        .filter(|&g| g > 0.0 && inside(g))
        .map(|g| g.clamp(ga, gb))
        .min_by(|a, b| a.total_cmp(b))
}

/// Lays down `count` gaps from `lo` with every product equal to `c`.
fn march(d: &Density, c: f64, count: usize) -> Vec<f64> {
    let mut levels = Vec::with_capacity(count + 1);
    let mut l = d.lo();
    levels.push(l);
    for _ in 0..count {
        l += first_gap(d, l, c);
        levels.push(l);
    }
    levels
}

/// Outer bisection on `c` until the last marched level lands on `hi`.
fn bisect(d: &Density, n: usize) -> OptimalLevels {
    let (lo, hi) = (d.lo(), d.hi());
    let mut c_lo = 0.0;
    let mut c_hi = (hi - lo) * d.peak();
    while march(d, c_hi, n - 1)[n - 1] < hi {
        c_hi *= 2.0;
    }
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..200 {
        let c = 0.5 * (c_lo + c_hi);
        if c <= c_lo || c >= c_hi {
            break;
        }
        let end = march(d, c, n - 1)[n - 1];
        let miss = (end - hi).abs();
        if best.is_none_or(|(_, m)| miss < m) {
            best = Some((c, miss));
        }
        if miss <= 1e-15 * (hi - lo) {
            break;
        }
        if end < hi {
            c_lo = c;
        } else {
            c_hi = c;
        }
    }
    let c = best.map_or(c_hi, |(c, _)| c);
    let mut levels = march(d, c, n - 1);
    levels[n - 1] = hi;
    assess(d, levels)
}

/// Thomas algorithm for a tridiagonal system; `sub[0]` and `sup[n-1]` are
/// ignored.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return None;
    }
    c[0] = sup[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom.abs() < 1e-300 || !denom.is_finite() {
            return None;
        }
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// Damped Newton on the balance equations `P_j − P_{j+1} = 0`, where
/// `P_j = gap_j·p(midpoint_j)`. Unknowns are the interior levels, so the
/// Jacobian is tridiagonal. Steps must reduce the sum of squares.
fn newton(d: &Density, start: &[f64], max_iter: usize) -> OptimalLevels {
    let n = start.len();
    let m = n - 2;
    let balance_eqs = |lv: &[f64]| -> Vec<f64> {
        gap_products(d, lv).windows(2).map(|w| w[0] - w[1]).collect()
    };
    let merit = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut levels = start.to_vec();
    let mut f = balance_eqs(&levels);
    for _ in 0..max_iter {
        let c = gap_products(d, &levels).iter().sum::<f64>() / (n - 1) as f64;
        if f.iter().all(|v| v.abs() <= 1e-14 * c) {
            break;
        }
        // derivatives of each gap product with respect to its left and
        // right level
        let (mut da, mut db) = (vec![0.0; n - 1], vec![0.0; n - 1]);
        for j in 0..n - 1 {
            let (a, b) = (levels[j], levels[j + 1]);
            let mid = 0.5 * (a + b);
            let (p, dp) = (d.eval(mid), d.slope(mid));
            da[j] = -p + 0.5 * (b - a) * dp;
            db[j] = p + 0.5 * (b - a) * dp;
        }
        let (mut sub, mut diag, mut sup) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for j in 0..m {
            sub[j] = da[j];
            diag[j] = db[j] - da[j + 1];
            sup[j] = -db[j + 1];
        }
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let Some(step) = solve_tridiagonal(&sub, &diag, &sup, &rhs) else {
            break;
        };
        let current = merit(&f);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let mut trial = levels.clone();
            for k in 0..m {
                trial[k + 1] += t * step[k];
            }
            if trial.windows(2).all(|w| w[0] < w[1]) {
                let tf = balance_eqs(&trial);
                if merit(&tf) < current {
                    levels = trial;
                    f = tf;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    assess(d, levels)
}

/// Symmetric Gauss-Seidel sweeps: each interior level moves, by bisection,
/// to where its two neighbouring gap products agree.
fn balance(d: &Density, levels: &mut [f64], sweeps: usize) {
    let n = levels.len();
    let prod = |a: f64, b: f64| (b - a) * d.eval(0.5 * (a + b));
    let relax_one = |levels: &mut [f64], j: usize| {
        let (k, m) = (levels[j - 1], levels[j + 1]);
        let (mut a, mut b) = (k, m);
        loop {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if prod(k, mid) < prod(mid, m) {
                a = mid;
            } else {
                b = mid;
            }
        }
        levels[j] = 0.5 * (a + b);
    };
    for s in 0..sweeps {
        if s % 2 == 0 {
            for j in 1..n - 1 {
                relax_one(levels, j);
            }
        } else {
            for j in (1..n - 1).rev() {
                relax_one(levels, j);
            }
        }
    }
}

/// Damped fixed-point iteration on the gaps: each gap moves towards a share
/// of the range proportional to `1/p(midpoint)`. Any fixed point has equal
/// gap products. The step shrinks whenever the residual grows.
fn relax(d: &Density, start: &[f64], iters: usize) -> OptimalLevels {
    let (lo, hi) = (d.lo(), d.hi());
    let span = hi - lo;
    let mut gaps: Vec<f64> = start.windows(2).map(|w| w[1] - w[0]).collect();
    let rebuild = |gaps: &[f64]| {
        let mut levels = Vec::with_capacity(gaps.len() + 1);
        let mut l = lo;
        levels.push(l);
        for g in gaps {
            l += g;
            levels.push(l);
        }
        *levels.last_mut().unwrap() = hi;
        levels
    };
    let mut best = assess(d, start.to_vec());
    let mut last = best.residual;
    let mut alpha = 0.5;
    for it in 0..iters {
        let levels = rebuild(&gaps);
        let inv: Vec<f64> = levels.windows(2).map(|w| 1.0 / d.eval(0.5 * (w[0] + w[1]))).collect();
        let total: f64 = inv.iter().sum();
        for (g, v) in gaps.iter_mut().zip(&inv) {
            *g = (1.0 - alpha) * *g + alpha * span * v / total;
        }
        let cur = assess(d, rebuild(&gaps));
        if cur.residual > last {
            alpha = (alpha * 0.5).max(1e-4);
        } else {
            alpha = (alpha * 1.1).min(0.5);
        }
        last = cur.residual;
        if cur.residual < best.residual {
            best = cur;
        }
        if best.residual <= ACCEPT {
            break;
        }
        if it % 200 == 199 {
            let polished = newton(d, &best.levels, 30);
            if polished.residual < best.residual {
                best = polished;
                if best.residual <= ACCEPT {
                    break;
                }
            }
        }
    }
    best
}

pub fn solve_optimal_levels(d: &Density, bits: u32) -> Result<OptimalLevels> {
    let n = level_count(bits)?;
    if n == 2 {
        return Ok(assess(d, vec![d.lo(), d.hi()]));
    }
    let mut best = bisect(d, n);
    if best.residual <= ACCEPT {
        return Ok(best);
    }
    let mut quantiles: Vec<f64> = (0..n).map(|j| d.quantile(j as f64 / (n - 1) as f64)).collect();
    quantiles[0] = d.lo();
    quantiles[n - 1] = d.hi();
    if !quantiles.windows(2).all(|w| w[0] < w[1]) {
        quantiles = uniform_levels(d.lo(), d.hi(), bits, Scheme::UniformAffine)?;
    }
    let mut starts = vec![quantiles.clone()];
    if best.residual.is_finite() {
        starts.push(best.levels.clone());
    }
    for s in &starts {
        let cand = newton(d, s, 100);
        if cand.residual < best.residual {
            best = cand;
        }
        if best.residual <= ACCEPT {
            return Ok(best);
        }
    }
    if let Some(cand) = continuation(d, n) {
        if cand.residual < best.residual {
            best = cand;
        }
        if best.residual <= ACCEPT {
            return Ok(best);
        }
    }
    let cand = relax(d, &quantiles, RELAX_ITERS);
    if cand.residual < best.residual {
        best = cand;
    }
    if best.residual <= ACCEPT {
        return Ok(best);
    }
    let mut cur = best.levels.clone();
    for _ in 0..MAX_ROUNDS {
        balance(d, &mut cur, 8);
        let swept = assess(d, cur.clone());
        let polished = newton(d, &cur, 30);
        for c in [swept, polished] {
            if c.residual < best.residual {
                best = c;
            }
        }
        if best.residual <= ACCEPT {
            return Ok(best);
        }
    }
    if best.residual <= TOLERATE {
        Ok(best)
    } else {
        Err(Error::NoConvergence {
            iterations: MAX_ROUNDS,
            best_residual: best.residual,
        })
    }
}

const RELAX_ITERS: usize = 5_000;
const MAX_ROUNDS: usize = 50;

/// Follows the solution from the uniform density (evenly spaced levels) to
/// `d` along `(1 − t)·uniform + t·d`, re-solving with Newton at each step.
fn continuation(d: &Density, n: usize) -> Option<OptimalLevels> {
    let bins = d.masses().len();
    let blend = |t: f64| {
        let m: Vec<f64> = d.masses().iter().map(|&m| (1.0 - t) / bins as f64 + t * m).collect();
        Density::from_masses(d.lo(), d.hi(), &m)
    };
    let step = (d.hi() - d.lo()) / (n - 1) as f64;
    let mut cur: Vec<f64> = (0..n).map(|i| d.lo() + i as f64 * step).collect();
    cur[n - 1] = d.hi();
    let (mut t, mut dt) = (0.0f64, 0.125f64);
    while t < 1.0 {
        if dt < 1e-7 {
            return None;
        }
        let next = (t + dt).min(1.0);
        let dn = blend(next).ok()?;
        let cand = newton(&dn, &cur, 40);
        if cand.residual <= ACCEPT {
            cur = cand.levels;
            t = next;
            dt = (dt * 2.0).min(0.5);
        } else {
            dt *= 0.25;
        }
    }
    Some(assess(d, cur))
}

pub fn optimal_levels(d: &Density, bits: u32) -> Result<Vec<f64>> {
    Ok(solve_optimal_levels(d, bits)?.levels)
}

/// `∫ |w − q(w)|·p(w) dw` over the density's range, `q` rounding to the
/// nearest level. Integrated exactly: between knots, levels and level
/// midpoints the integrand is a quadratic, so Simpson's rule is exact.
pub fn quantization_error(levels: &[f64], d: &Density) -> Result<f64> {
    if levels.is_empty() {
        return Err(Error::Empty("levels".into()));
    }
    if levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("levels must be strictly increasing".into()));
    }
    let (lo, hi) = (d.lo(), d.hi());
    let mids = levels.windows(2).map(|w| 0.5 * (w[0] + w[1]));
    let mut cuts: Vec<f64> = d
        .knots()
        .iter()
        .copied()
        .chain(levels.iter().copied())
        .chain(mids)
        .filter(|&x| x > lo && x < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let nearest = |w: f64| {
        let i = levels.partition_point(|&l| l < w);
        match (i.checked_sub(1), levels.get(i)) {
            (Some(a), Some(&b)) => {
                if w - levels[a] <= b - w {
                    levels[a]
                } else {
                    b
                }
            }
            (None, Some(&b)) => b,
            (Some(a), None) => levels[a],
            (None, None) => unreachable!(),
        }
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        let q = nearest(m);
        let f = |x: f64| (x - q).abs() * d.eval(x);
        total += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform01() -> Density {
        Density::from_masses(0.0, 1.0, &[1.0; 64]).unwrap()
    }

    #[test]
    fn affine_examples() {
        let l = uniform_levels(-1.0, 1.0, 2, Scheme::UniformAffine).unwrap();
        let want = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (a, b) in l.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(uniform_levels(-0.3, 0.8, 1, Scheme::UniformAffine).unwrap(), vec![-0.3, 0.8]);
    }

    #[test]
    fn scale_examples() {
        assert_eq!(
            uniform_levels(-1.0, 1.0, 2, Scheme::UniformScale).unwrap(),
            vec![-2.0, -1.0, 0.0, 1.0]
        );
        let l = uniform_levels(-0.5, 2.0, 4, Scheme::UniformScale).unwrap();
        assert_eq!(l.len(), 16);
        assert!(l.contains(&0.0));
        assert_eq!(l[15], 2.0);
        assert!(uniform_levels(-1.0, 1.0, 1, Scheme::UniformScale).is_err());
        assert!(matches!(
            uniform_levels(1.0, 1.0, 4, Scheme::UniformAffine),
            Err(Error::DegenerateRange { .. })
        ));
    }

    #[test]
    fn two_level_uniform_error_is_a_quarter() {
        let e = quantization_error(&[0.0, 1.0], &uniform01()).unwrap();
        assert!((e - 0.25).abs() < 1e-14, "{e}");
    }

    #[test]
    fn doubling_levels_halves_error() {
        let d = uniform01();
        for bits in 1..6 {
            let a = quantization_error(&uniform_levels(0.0, 1.0, bits, Scheme::UniformAffine).unwrap(), &d).unwrap();
            let n = (1u32 << bits) as f64;
            // n levels on [0, 1] leave n−1 gaps, each contributing gap²/4
            assert!((a - 0.25 / (n - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn levels_on_every_point_give_tiny_error() {
        let d = uniform01();
        let levels: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        assert!(quantization_error(&levels, &d).unwrap() < 2e-4);
    }

    #[test]
    fn optimal_on_uniform_is_evenly_spaced() {
        let d = uniform01();
        for bits in 1..=8 {
            let o = solve_optimal_levels(&d, bits).unwrap();
            let n = o.levels.len();
            for (i, &l) in o.levels.iter().enumerate() {
                assert!((l - i as f64 / (n - 1) as f64).abs() < 1e-9, "bits {bits} level {i}");
            }
        }
    }

    #[test]
    fn first_gap_solves_the_product() {
        let d = Density::from_fn(0.0, 1.0, 50, |w| 2.0 * w).unwrap();
        for &(l, c) in &[(0.0, 0.01), (0.2, 0.05), (0.7, 0.3), (0.99, 0.5)] {
            let g = first_gap(&d, l, c);
            assert!((g * d.eval(l + g / 2.0) - c).abs() < 1e-12 * c.max(1.0), "{l} {c}");
        }
    }

    #[test]
    fn gaussian_needs_more_than_first_roots() {
        let d = Density::from_fn(-1.0, 1.0, 256, |w| (-w * w / (2.0 * 0.09)).exp()).unwrap();
        for bits in [2, 3, 4, 8] {
            let o = solve_optimal_levels(&d, bits).unwrap();
            assert!(o.residual <= 1e-6, "bits {bits}: {}", o.residual);
            assert_eq!(o.levels[0], -1.0);
            assert_eq!(*o.levels.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn tridiagonal_solver() {
        // [2 1 0; 1 3 1; 0 1 2] x = [3 5 3] → x = [1 1 1]
        let x = solve_tridiagonal(&[0.0, 1.0, 1.0], &[2.0, 3.0, 2.0], &[1.0, 1.0, 0.0], &[3.0, 5.0, 3.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }
}
