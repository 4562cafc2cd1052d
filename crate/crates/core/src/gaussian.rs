//! Standard-normal special functions and reproducible Gaussian streams.
//!
//! The half-CDF `phi` integrates the standard normal density from 0 to
//! `alpha`, so `phi(0) = 0` and `phi(inf) = 0.5`. Everything is routed
//! through `erf`/`erfc` so tail masses down to ~1e-300 keep full relative
//! precision.

use std::f64::consts::{FRAC_2_SQRT_PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Result};

/// Upper bound of the bracket used when inverting the half-CDF.
const ALPHA_BRACKET_MAX: f64 = 40.0;

/// Half-CDF of the standard normal: `(1/sqrt(2 pi)) * int_0^alpha exp(-x^2/2) dx`.
///
/// Odd in `alpha`, so negative arguments return `-phi(|alpha|)`.
pub fn phi(alpha: f64) -> f64 {
    0.5 * libm::erf(alpha / SQRT_2)
}

/// Upper tail `P(Z > z)` of a standard normal variate.
pub fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Two-sided tail `P(|Z| > alpha)`, i.e. the per-cycle over-modulation
/// probability `mu = 1 - 2 phi(alpha)` of a fitted modulator.
pub fn two_sided_tail(alpha: f64) -> f64 {
    libm::erfc(alpha.abs() / SQRT_2)
}

/// Probability mass of `N(mean, variance)` on `[lo, hi]`.
///
/// Both tails are evaluated with `erfc`, so the result stays accurate when
/// the interval sits far out in one tail or covers almost all the mass.
pub fn normal_mass(lo: f64, hi: f64, mean: f64, variance: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if variance <= 0.0 {
        return if lo <= mean && mean <= hi { 1.0 } else { 0.0 };
    }
    let sd = variance.sqrt();
    let za = (lo - mean) / sd;
    let zb = (hi - mean) / sd;
    if za >= 0.0 {
        upper_tail(za) - upper_tail(zb)
    } else if zb <= 0.0 {
        upper_tail(-zb) - upper_tail(-za)
    } else {
        1.0 - upper_tail(-za) - upper_tail(zb)
    }
}

/// Saturation factor: the unique `alpha >= 0` with `2 phi(alpha) = 1 - mu`.
///
/// Solved with Newton steps on `ln erfc(alpha/sqrt 2) - ln mu`, falling back
/// to bisection whenever a step leaves the bracket `[0, 40]`.
pub fn saturation_factor(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(domain(format!(
            "over-modulation probability must lie in (0, 1), got {mu}"
        )));
    }
    let ln_mu = mu.ln();
    let residual = |a: f64| libm::erfc(a / SQRT_2).ln() - ln_mu;

    let (mut lo, mut hi) = (0.0_f64, ALPHA_BRACKET_MAX);
    // Initial guess from the leading term of the tail asymptotic.
    let mut alpha = (-2.0 * (mu * (std::f64::consts::PI / 2.0).sqrt()).ln())
        .max(0.0)
        .sqrt()
        .clamp(lo, hi);

    for _ in 0..200 {
        let g = residual(alpha);
        if g == 0.0 {
            return Ok(alpha);
        }
        if g > 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.max(1.0) {
            break;
        }

        let tail = libm::erfc(alpha / SQRT_2);
        let density = FRAC_2_SQRT_PI / SQRT_2 * (-0.5 * alpha * alpha).exp();
        let slope = -density / tail;
        let newton = alpha - g / slope;
        alpha = if slope.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (alpha - lo).abs().min((hi - alpha).abs()) == 0.0 {
            alpha = 0.5 * (lo + hi);
        }
    }
    Ok(alpha)
}

/// Counter-based Gaussian stream: a ChaCha8 keystream keyed by `seed` and
/// positioned on the independent sub-stream `stream_id`.
///
/// Draws depend only on `(seed, stream_id)` and the number of values already
/// taken from this stream, never on other streams or thread scheduling.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// One standard normal variate.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One `N(mean, variance)` variate. Zero variance returns `mean` exactly
    /// and does not advance the stream.
    pub fn gaussian(&mut self, mean: f64, variance: f64) -> Result<f64> {
        if variance < 0.0 || variance.is_nan() {
            return Err(domain(format!("variance must be >= 0, got {variance}")));
        }
        if variance == 0.0 {
            return Ok(mean);
        }
        Ok(mean + variance.sqrt() * self.standard_normal())
    }
}

/// Draw one Gaussian variate from `stream`.
pub fn draw_gaussian(stream: &mut RngStream, mean: f64, variance: f64) -> Result<f64> {
    stream.gaussian(mean, variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Composite Simpson quadrature of the standard normal density on [0, a].
    fn phi_quadrature(a: f64) -> f64 {
        let n = 20_000;
        let h = a / n as f64;
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(0.0) + f(a);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn phi_matches_quadrature() {
        assert_eq!(phi(0.0), 0.0);
        for &a in &[0.1, 0.5, 1.0, 1.96, 2.5, 4.0, 6.0] {
            assert_abs_diff_eq!(phi(a), phi_quadrature(a), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(phi(1.96), 0.4750, epsilon = 1e-4);
        assert_abs_diff_eq!(phi(4.0), 0.49996833, epsilon = 1e-7);
    }

    #[test]
    fn phi_is_odd_and_bounded() {
        for &a in &[0.3, 1.7, 5.0] {
            assert_eq!(phi(-a), -phi(a));
        }
        assert!(phi(40.0) <= 0.5);
        assert_abs_diff_eq!(phi(40.0), 0.5, epsilon = 1e-16);
    }

    #[test]
    fn phi_monotone_on_grid() {
        let mut prev = phi(0.0);
        for i in 1..=10_000 {
            let a = 8.0 * i as f64 / 10_000.0;
            let v = phi(a);
            // Above ~7 the half-CDF is within an ulp of 0.5; compare tails there.
            if a < 7.0 {
                assert!(v > prev, "phi not increasing at {a}");
            }
            assert!(upper_tail(a) < upper_tail(a - 8.0 / 10_000.0));
            prev = v;
        }
    }

    #[test]
    fn saturation_factor_values() {
        assert_abs_diff_eq!(saturation_factor(0.01).unwrap(), 2.5758, epsilon = 1e-3);
        let mu4 = 1.0 - 2.0 * phi(4.0);
        assert_abs_diff_eq!(mu4, 6.33e-5, epsilon = 1e-7);
        assert_abs_diff_eq!(saturation_factor(mu4).unwrap(), 4.0, epsilon = 1e-3);
        assert_abs_diff_eq!(
            saturation_factor(two_sided_tail(4.0)).unwrap(),
            4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn saturation_factor_round_trip() {
        for &mu in &[1e-1, 1e-2, 1e-4, 1e-8, 1e-12, 1e-30] {
            let a = saturation_factor(mu).unwrap();
            assert!((2.0 * phi(a) - (1.0 - mu)).abs() <= 1e-12);
            assert!((phi(a) - (1.0 - mu) / 2.0).abs() <= 1e-10);
            assert!(((two_sided_tail(a) - mu) / mu).abs() < 1e-12);
        }
    }

    #[test]
    fn saturation_factor_tends_to_zero_at_unit_mu() {
        let a = saturation_factor(1.0 - 1e-9).unwrap();
        assert!(a < 1e-8);
    }

    #[test]
    fn saturation_factor_rejects_out_of_range() {
        for &mu in &[0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(saturation_factor(mu).is_err());
        }
    }

    #[test]
    fn normal_mass_edges() {
        assert_abs_diff_eq!(normal_mass(-1.96, 1.96, 0.0, 1.0), 0.95, epsilon = 1e-4);
        assert_eq!(normal_mass(1.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(normal_mass(-1.0, 1.0, 0.0, 0.0), 1.0);
        // far tail keeps relative precision
        let m = normal_mass(10.0, f64::INFINITY, 0.0, 1.0);
        assert!((m / 7.619853024160527e-24 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_variance_returns_mean() {
        let mut s = RngStream::new(7, 3);
        assert_eq!(draw_gaussian(&mut s, 3.0, 0.0).unwrap(), 3.0);
        assert!(draw_gaussian(&mut s, 0.0, -1.0).is_err());
    }

    #[test]
    fn streams_are_deterministic() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 0);
        for _ in 0..2 {
            assert_eq!(
                a.gaussian(0.0, 1.0).unwrap().to_bits(),
                b.gaussian(0.0, 1.0).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn stream_draws_do_not_depend_on_interleaving() {
        let sequential: Vec<f64> = {
            let mut s = RngStream::new(11, 5);
            (0..8).map(|_| s.standard_normal()).collect()
        };
        let mut s = RngStream::new(11, 5);
        let mut other = RngStream::new(11, 6);
        let interleaved: Vec<f64> = (0..8)
            .map(|_| {
                other.standard_normal();
                s.standard_normal()
            })
            .collect();
        assert_eq!(sequential, interleaved);
    }

    #[test]
    fn large_sample_moments() {
        let mut s = RngStream::new(2024, 0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| s.gaussian(0.0, 1.0).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 100_000;
        let mut a = RngStream::new(99, 0);
        let mut b = RngStream::new(99, 1);
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            (0..n).map(|_| (a.standard_normal(), b.standard_normal())).unzip();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx).powi(2);
            syy += (y - my).powi(2);
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!(rho.abs() < 0.01, "cross-correlation {rho}");
    }
}
