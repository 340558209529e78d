//! χ² machinery and checks of the one-shot regret statements.
//!
//! For an isotropic sample x = σg, g ~ N(0, I_d), the scaled distance
//! ‖x − x*‖²/σ² is non-central χ² with d degrees of freedom and
//! non-centrality ‖x*‖²/σ². Everything here builds on that fact.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::seed::{self, purpose};
use crate::special::{gamma_p, ln_gamma};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Poisson mass left out of the non-central mixture.
const MIXTURE_TAIL: f64 = 1e-12;

/// P[U ≤ x] for U ~ χ²(d).
///
/// ```
/// use oneshot_doe::stats::chi2_cdf;
/// assert!((chi2_cdf(2.0, 2).unwrap() - (1.0 - (-1f64).exp())).abs() < 1e-15);
/// ```
pub fn chi2_cdf(x: f64, d: usize) -> Result<f64> {
    ensure!(x >= 0.0, Domain, "chi-squared CDF needs x ≥ 0, got {x}");
    ensure!(d >= 1, InvalidArgument, "degrees of freedom must be at least 1");
    Ok(gamma_p(d as f64 / 2.0, x / 2.0))
}

/// P[U ≤ x] for U ~ χ²(d, μ), as the Poisson(μ/2) mixture of central CDFs
/// with d + 2k degrees of freedom.
///
/// The sum starts at the Poisson mode and walks outward using
/// P(a+1, y) = P(a, y) − y^a e^{−y}/Γ(a+1), stopping on each side once a
/// geometric bound on the remaining Poisson mass drops below 1e−12.
pub fn noncentral_chi2_cdf(x: f64, d: usize, mu: f64) -> Result<f64> {
    ensure!(x >= 0.0, Domain, "non-central CDF needs x ≥ 0, got {x}");
    ensure!(mu >= 0.0 && mu.is_finite(), Domain, "non-centrality must be finite and ≥ 0, got {mu}");
    let central = chi2_cdf(x, d)?;
    if mu == 0.0 {
        return Ok(central);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let m = mu / 2.0;
    let y = x / 2.0;
    let (ln_m, ln_y) = (m.ln(), y.ln());
    let a0 = d as f64 / 2.0;

    let k0 = m.floor();
    let ln_w0 = -m + k0 * ln_m - ln_gamma(k0 + 1.0);
    let p0 = gamma_p(a0 + k0, y);
    // ln of y^a e^{-y} / Γ(a+1) at a = a0 + k0.
    let ln_t0 = (a0 + k0) * ln_y - y - ln_gamma(a0 + k0 + 1.0);

    let mut total = ln_w0.exp() * p0;

    // Upward: k = k0+1, k0+2, ...
    let (mut k, mut ln_w, mut p, mut ln_t) = (k0, ln_w0, p0, ln_t0);
    loop {
        p = (p - ln_t.exp()).max(0.0);
        ln_t += ln_y - (a0 + k + 1.0).ln();
        k += 1.0;
        ln_w += ln_m - k.ln();
        let w = ln_w.exp();
        total += w * p;
        let ratio = m / (k + 1.0);
        if p == 0.0 || (ratio < 1.0 && w * ratio / (1.0 - ratio) < MIXTURE_TAIL) {
            break;
        }
    }

    // Downward: k = k0-1, ..., 0.
    let (mut k, mut ln_w, mut p, mut ln_t) = (k0, ln_w0, p0, ln_t0);
    while k > 0.0 {
        // t(a−1) = t(a)·a/y, and P(a−1) = P(a) + t(a−1).
        ln_t += (a0 + k).ln() - ln_y;
        p = (p + ln_t.exp()).min(1.0);
        ln_w += k.ln() - ln_m;
        k -= 1.0;
        let w = ln_w.exp();
        total += w * p;
        let ratio = k / m;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < MIXTURE_TAIL {
            break;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// P[‖σg − x*‖² ≤ (1−ε)‖x*‖²] for a single isotropic sample.
///
/// With σ = 0 the sample sits on the center, which succeeds exactly when
/// ε = 0 (or x* = 0).
pub fn success_prob_single(sigma: f64, eps: f64, xstar_norm_sq: f64, d: usize) -> Result<f64> {
    ensure!(sigma >= 0.0 && sigma.is_finite(), Domain, "sigma must be finite and ≥ 0, got {sigma}");
    ensure!((0.0..1.0).contains(&eps), Domain, "gain ε must lie in [0, 1), got {eps}");
    ensure!(xstar_norm_sq >= 0.0, Domain, "‖x*‖² must be ≥ 0");
    ensure!(d >= 1, InvalidArgument, "dim must be at least 1");
    if sigma == 0.0 {
        return Ok(if eps == 0.0 || xstar_norm_sq == 0.0 { 1.0 } else { 0.0 });
    }
    let s2 = sigma * sigma;
    noncentral_chi2_cdf((1.0 - eps) * xstar_norm_sq / s2, d, xstar_norm_sq / s2)
}

/// 1 − (1 − p)^λ with p from [`success_prob_single`].
pub fn success_prob_min(lambda: usize, sigma: f64, eps: f64, xstar_norm_sq: f64, d: usize) -> Result<f64> {
    ensure!(lambda >= 1, InvalidArgument, "lambda must be at least 1");
    let p = success_prob_single(sigma, eps, xstar_norm_sq, d)?;
    Ok(at_least_one(p, lambda))
}

#[inline]
fn at_least_one(p: f64, lambda: usize) -> f64 {
    -(lambda as f64 * (-p).ln_1p()).exp_m1()
}

/// 2·exp(−d t²/8), bounding P[|U/d − 1| ≥ t] for U ~ χ²(d).
pub fn central_concentration_bound(d: usize, t: f64) -> Result<f64> {
    ensure!((0.0..=1.0).contains(&t), Domain, "t must lie in [0, 1], got {t}");
    Ok(2.0 * (-(d as f64) * t * t / 8.0).exp())
}

/// exp(−x²/(4(2μ + d))), bounding P[U − (d+μ) ≤ −x] for U ~ χ²(d, μ).
pub fn noncentral_lower_tail_bound(x: f64, d: usize, mu: f64) -> Result<f64> {
    ensure!(x > 0.0, Domain, "x must be positive, got {x}");
    ensure!(mu >= 0.0, Domain, "non-centrality must be ≥ 0, got {mu}");
    Ok((-x * x / (4.0 * (2.0 * mu + d as f64))).exp())
}

/// Upper envelope on the achievable gain for a given confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub a_tilde: f64,
    pub sigma_tilde_sq: f64,
    pub eps_upper: f64,
    /// Adjusted confidence δ′ after discounting atypical ‖x*‖².
    pub delta_prime: f64,
    /// Maximizer s = σ² of the gain expression on (0, σ̃²].
    pub sigma_sq_at_sup: f64,
}

/// Envelope quantities at budget λ, dimension d, confidence δ and ‖x*‖².
///
/// With t = d^{−1/3} and q = 2exp(−d t²/8) ≥ P[|‖x*‖²/d − 1| > t]:
/// δ′ = (δ − q)/(1 − q), Ã = −4 ln(1 − (1−δ′)^{1/λ}),
/// σ̃² = 2(‖x*‖²/d)/(d/Ã − 1), and the gain bound is
/// sup_{0<s≤σ̃²} (√(Ã(2‖x*‖²s + d s²)) − d s)/‖x*‖².
pub fn envelope(lambda: usize, d: usize, delta: f64, xstar_norm_sq: f64) -> Result<EnvelopeResult> {
    ensure!(lambda >= 2, InvalidArgument, "envelope needs λ ≥ 2, got {lambda}");
    ensure!(d >= 1, InvalidArgument, "dim must be at least 1");
    ensure!(delta > 0.0 && delta < 1.0, Domain, "δ must lie in (0, 1), got {delta}");
    ensure!(xstar_norm_sq > 0.0 && xstar_norm_sq.is_finite(), Domain, "‖x*‖² must be positive and finite");
    let df = d as f64;
    let q = 2.0 * (-df.cbrt() / 8.0).exp();
    ensure!(
        q < delta,
        Regime,
        "d = {d} is too small: the norm concentration bound {q:.4} already exceeds δ = {delta} (needs log λ ≪ d)"
    );
    let delta_prime = (delta - q) / (1.0 - q);
    let a_tilde = a_tilde(lambda, delta_prime);
    ensure!(
        df > a_tilde,
        Regime,
        "d/Ã = {:.4} ≤ 1 at d = {d}, λ = {lambda}: log λ is not small against d at this scale",
        df / a_tilde
    );
    let n = xstar_norm_sq;
    let sigma_tilde_sq = 2.0 * (n / df) / (df / a_tilde - 1.0);
    let s_star = ((n / df) * ((df / (df - a_tilde)).sqrt() - 1.0)).min(sigma_tilde_sq);
    let eps_upper = gain_bound(a_tilde, n, df, s_star) / n;
    Ok(EnvelopeResult { a_tilde, sigma_tilde_sq, eps_upper, delta_prime, sigma_sq_at_sup: s_star })
}

/// Ã = −4 ln(1 − (1−δ′)^{1/λ}).
pub fn a_tilde(lambda: usize, delta_prime: f64) -> f64 {
    let root = ((-delta_prime).ln_1p() / lambda as f64).exp_m1(); // (1−δ′)^{1/λ} − 1
    -4.0 * (-root).ln()
}

/// √(Ã(2ns + ds²)) − ds, the gain bound times ‖x*‖² at σ² = s.
pub(crate) fn gain_bound(a_tilde: f64, n: f64, d: f64, s: f64) -> f64 {
    (a_tilde * (2.0 * n * s + d * s * s)).sqrt() - d * s
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
///
/// ```
/// use oneshot_doe::stats::{wilson_interval, Z95};
/// let (lo, hi) = wilson_interval(50.0, 100, Z95);
/// assert!(lo < 0.5 && hi > 0.5 && (lo + hi - 1.0).abs() < 1e-12);
/// ```
pub fn wilson_interval(successes: f64, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// How Monte Carlo distances ‖σg − x*‖² are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum McRoute {
    /// Rotate x* onto the first axis: the distance is
    /// (σ g₁ − ‖x*‖)² + σ² χ²(d−1), with ‖x*‖² ~ χ²(d).
    #[default]
    Rotated,
    /// Draw every coordinate of x* and of each sample.
    Materialized,
}

impl std::str::FromStr for McRoute {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotated" => Ok(McRoute::Rotated),
            "materialized" => Ok(McRoute::Materialized),
            other => Err(crate::Error::Parse(format!("unknown route `{other}` (expected rotated or materialized)"))),
        }
    }
}

/// Per-replication draws for sphere distances under the rotated route.
/// `first[i]` is g₁ and `rest[i]` is Σ_{j≥2} g_j² for sample i.
#[derive(Clone, Debug, PartialEq)]
pub struct RotatedDraws {
    pub xstar_norm_sq: f64,
    pub first: Vec<f64>,
    pub rest: Vec<f64>,
}

impl RotatedDraws {
    pub fn sample<R: Rng>(rng: &mut R, lambda: usize, d: usize, xstar_norm_sq: f64) -> Self {
        let rest_dist = (d > 1).then(|| ChiSquared::new((d - 1) as f64).expect("positive degrees of freedom"));
        let mut first = Vec::with_capacity(lambda);
        let mut rest = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            first.push(rng.sample::<f64, _>(StandardNormal));
            rest.push(rest_dist.as_ref().map_or(0.0, |c| c.sample(rng)));
        }
        RotatedDraws { xstar_norm_sq, first, rest }
    }

    /// min_i ‖σ g_i − x*‖².
    pub fn min_distance_sq(&self, sigma: f64) -> f64 {
        let norm = self.xstar_norm_sq.sqrt();
        let s2 = sigma * sigma;
        self.first
            .iter()
            .zip(&self.rest)
            .map(|(&z, &c)| (sigma * z - norm).powi(2) + s2 * c)
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn draw_norm_sq<R: Rng>(rng: &mut R, d: usize) -> f64 {
    ChiSquared::new(d as f64).expect("positive degrees of freedom").sample(rng)
}

/// Inputs of the Monte Carlo success-probability check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheckConfig {
    pub d: usize,
    pub lambda: usize,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub route: McRoute,
}

impl TheoryCheckConfig {
    pub fn new(d: usize, lambda: usize, reps: usize, seed: u64) -> Self {
        TheoryCheckConfig { d, lambda, delta: 0.5, c1: 1.0, c2: 1.0, reps, seed, route: McRoute::Rotated }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.d >= 1, Config, "d must be at least 1");
        ensure!(self.lambda >= 2, Config, "lambda must be at least 2 (ln λ = 0 otherwise)");
        ensure!((0.5..1.0).contains(&self.delta), Config, "delta must lie in [0.5, 1), got {}", self.delta);
        ensure!(self.c1 >= 0.0 && self.c1.is_finite(), Config, "c1 must be finite and ≥ 0, got {}", self.c1);
        ensure!(self.c2 > 0.0 && self.c2.is_finite(), Config, "c2 must be finite and positive, got {}", self.c2);
        ensure!(self.reps >= 1, Config, "reps must be at least 1");
        ensure!(self.eps() < 1.0, Config, "gain c1·ln λ/d = {} must stay below 1", self.eps());
        Ok(())
    }

    /// ε = c₁ ln λ / d.
    pub fn eps(&self) -> f64 {
        self.c1 * (self.lambda as f64).ln() / self.d as f64
    }

    /// σ = √(c₂ ln λ / d).
    pub fn sigma(&self) -> f64 {
        (self.c2 * (self.lambda as f64).ln() / self.d as f64).sqrt()
    }
}

/// Outcome of [`theorem1_check`]. Serializes to the fields
/// `d, lambda, delta, c1, c2, reps, frequency, ci_low, ci_high, closed_form`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub d: usize,
    pub lambda: usize,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub reps: usize,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub closed_form: f64,
    /// Standard error of frequency − closed_form given the x* draws.
    #[serde(skip)]
    pub diff_se: f64,
}

impl TheoryCheck {
    /// Whether the Wilson lower bound reaches δ.
    pub fn meets_delta(&self) -> bool {
        self.ci_low >= self.delta
    }

    /// |frequency − closed_form| in units of its standard error.
    pub fn discrepancy_z(&self) -> f64 {
        let diff = (self.frequency - self.closed_form).abs();
        if self.diff_se == 0.0 {
            if diff == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            diff / self.diff_se
        }
    }
}

/// Monte Carlo estimate of P[min_i ‖x_i − x*‖² ≤ (1−ε)‖x*‖²] with
/// ε = c₁ ln λ/d, x_i ~ N(0, σ² I), σ² = c₂ ln λ/d, x* ~ N(0, I).
/// Alongside the frequency it averages the closed form
/// 1 − (1−p)^λ over the same x* draws.
pub fn theorem1_check(cfg: &TheoryCheckConfig) -> Result<TheoryCheck> {
    cfg.validate()?;
    let (sigma, eps) = (cfg.sigma(), cfg.eps());
    let per_rep: Vec<(bool, f64)> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::stream(seed::derive(cfg.seed, &[purpose::SAMPLES, r]));
            let (n, best) = min_distance_draw(&mut rng, cfg.route, cfg.lambda, cfg.d, sigma);
            let closed = success_prob_min(cfg.lambda, sigma, eps, n, cfg.d)?;
            Ok((best <= (1.0 - eps) * n, closed))
        })
        .collect::<Result<_>>()?;
    let hits = per_rep.iter().filter(|(hit, _)| *hit).count() as f64;
    let reps = cfg.reps as f64;
    let closed_form = per_rep.iter().map(|(_, c)| c).sum::<f64>() / reps;
    let var = per_rep.iter().map(|(_, c)| c * (1.0 - c)).sum::<f64>() / reps;
    let (ci_low, ci_high) = wilson_interval(hits, cfg.reps, Z95);
    Ok(TheoryCheck {
        d: cfg.d,
        lambda: cfg.lambda,
        delta: cfg.delta,
        c1: cfg.c1,
        c2: cfg.c2,
        reps: cfg.reps,
        frequency: hits / reps,
        ci_low,
        ci_high,
        closed_form,
        diff_se: (var / reps).sqrt(),
    })
}

/// Draws x* and λ samples at scale σ; returns (‖x*‖², min_i ‖x_i − x*‖²).
pub(crate) fn min_distance_draw<R: Rng>(rng: &mut R, route: McRoute, lambda: usize, d: usize, sigma: f64) -> (f64, f64) {
    match route {
        McRoute::Rotated => {
            let n = draw_norm_sq(rng, d);
            let draws = RotatedDraws::sample(rng, lambda, d, n);
            (n, draws.min_distance_sq(sigma))
        }
        McRoute::Materialized => {
            let xstar: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = xstar.iter().map(|v| v * v).sum();
            let mut best = f64::INFINITY;
            for _ in 0..lambda {
                let dist: f64 = xstar
                    .iter()
                    .map(|&c| {
                        let g: f64 = rng.sample(StandardNormal);
                        (sigma * g - c).powi(2)
                    })
                    .sum();
                best = best.min(dist);
            }
            (n, best)
        }
    }
}

/// Largest ε in [0, 1) for which the closed-form success probability,
/// averaged over `reps` seeded draws of ‖x*‖², is at least δ, with
/// σ² = k·ln λ/d. Returns 0 when even ε = 0 misses δ.
pub fn critical_gain(d: usize, lambda: usize, k: f64, delta: f64, reps: usize, seed: u64) -> Result<f64> {
    ensure!(lambda >= 2 && d >= 1 && reps >= 1, InvalidArgument, "critical gain needs λ ≥ 2, d ≥ 1, reps ≥ 1");
    ensure!(k > 0.0 && k.is_finite(), InvalidArgument, "variance multiple must be positive");
    ensure!(delta > 0.0 && delta < 1.0, Domain, "δ must lie in (0, 1)");
    let sigma = (k * (lambda as f64).ln() / d as f64).sqrt();
    let norms: Vec<f64> = (0..reps as u64)
        .map(|r| draw_norm_sq(&mut seed::stream(seed::derive(seed, &[purpose::SAMPLES, r])), d))
        .collect();
    let mean_success = |eps: f64| -> Result<f64> {
        let ps: Vec<f64> = norms
            .par_iter()
            .map(|&n| success_prob_min(lambda, sigma, eps, n, d))
            .collect::<Result<_>>()?;
        Ok(ps.iter().sum::<f64>() / reps as f64)
    };
    if mean_success(0.0)? < delta {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64 - 1e-12);
    if mean_success(hi)? >= delta {
        return Ok(hi);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_success(mid)? >= delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::special::normal_cdf;
    use proptest::prelude::*;
    use rand::Rng;

    /// Brute force: central CDFs summed over every Poisson term up to a
    /// generous cutoff, with weights from ln Γ.
    fn mixture_oracle(x: f64, d: usize, mu: f64) -> f64 {
        let m = mu / 2.0;
        let kmax = (m + 40.0 * m.sqrt() + 200.0) as usize;
        (0..=kmax)
            .map(|k| {
                let k = k as f64;
                let w = if m == 0.0 { if k == 0.0 { 1.0 } else { 0.0 } } else { (-m + k * m.ln() - ln_gamma(k + 1.0)).exp() };
                w * gamma_p(d as f64 / 2.0 + k, x / 2.0)
            })
            .sum()
    }

    fn mc_sum_of_squares(x: f64, d: usize, mu: f64, draws: usize, seed: u64) -> (f64, f64) {
        let mut rng = seed::stream(seed);
        let shift = mu.sqrt();
        let mut hits = 0usize;
        for _ in 0..draws {
            let g: f64 = rng.sample(StandardNormal);
            let mut u = (g + shift).powi(2);
            for _ in 1..d {
                let g: f64 = rng.sample(StandardNormal);
                u += g * g;
            }
            hits += usize::from(u <= x);
        }
        let p = hits as f64 / draws as f64;
        (p, (p * (1.0 - p) / draws as f64).sqrt())
    }

    #[test]
    fn central_examples() {
        assert!((chi2_cdf(2.0, 2).unwrap() - 0.632_121).abs() < 1e-6);
        assert_eq!(chi2_cdf(0.0, 7).unwrap(), 0.0);
        assert!(matches!(chi2_cdf(-1.0, 3), Err(Error::Domain(_))));
        let (p, se) = mc_sum_of_squares(5.0, 3, 0.0, 1_000_000, 11);
        assert!((chi2_cdf(5.0, 3).unwrap() - p).abs() < 3.0 * se);
    }

    #[test]
    fn noncentral_examples() {
        for (x, d) in [(0.5, 1), (3.0, 4), (40.0, 30)] {
            assert_eq!(noncentral_chi2_cdf(x, d, 0.0).unwrap(), chi2_cdf(x, d).unwrap());
        }
        let want = normal_cdf(0.0) - normal_cdf(-2.0);
        assert!((noncentral_chi2_cdf(1.0, 1, 1.0).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.477_250).abs() < 1e-6);
        assert!(noncentral_chi2_cdf(-1.0, 1, 1.0).is_err());
        assert!(noncentral_chi2_cdf(1.0, 1, -1.0).is_err());
    }

    #[test]
    fn noncentral_matches_brute_force_mixture() {
        for (x, d, mu) in [
            (10.0, 5, 3.0),
            (0.3, 1, 0.2),
            (150.0, 100, 50.0),
            (900.0, 50, 900.0),
            (2.0, 2, 30.0),
            (5000.0, 1000, 4000.0),
            (60.0, 50, 100.0),
            (1e-3, 3, 1e-4),
        ] {
            let got = noncentral_chi2_cdf(x, d, mu).unwrap();
            let want = mixture_oracle(x, d, mu);
            assert!((got - want).abs() < 1e-10, "({x}, {d}, {mu}): {got} vs {want}");
        }
    }

    #[test]
    fn noncentral_matches_monte_carlo() {
        let (p, se) = mc_sum_of_squares(10.0, 5, 3.0, 1_000_000, 5);
        assert!((noncentral_chi2_cdf(10.0, 5, 3.0).unwrap() - p).abs() < 3.0 * se);
    }

    #[test]
    fn large_noncentrality_stays_accurate() {
        // Normal approximation sanity: mean d+μ, variance 2(d+2μ).
        let (d, mu) = (1000usize, 2e5);
        let sd = (2.0 * (d as f64 + 2.0 * mu)).sqrt();
        let at_mean = noncentral_chi2_cdf(d as f64 + mu, d, mu).unwrap();
        assert!((at_mean - 0.5).abs() < 0.01, "{at_mean}");
        let below = noncentral_chi2_cdf(d as f64 + mu - 2.0 * sd, d, mu).unwrap();
        assert!((below - normal_cdf(-2.0)).abs() < 0.01, "{below}");
    }

    #[test]
    fn single_success_examples() {
        let d = 20;
        let sigma = (100f64.ln() / 20.0).sqrt();
        let p = success_prob_single(sigma, 0.1, 20.0, d).unwrap();
        let mut rng = seed::stream(3);
        let draws = 1_000_000;
        let norm = 20f64.sqrt();
        let mut hits = 0usize;
        for _ in 0..draws {
            let mut dist = 0.0;
            for j in 0..d {
                let g: f64 = rng.sample(StandardNormal);
                let c = if j == 0 { norm } else { 0.0 };
                dist += (sigma * g - c).powi(2);
            }
            hits += usize::from(dist <= 0.9 * 20.0);
        }
        let f = hits as f64 / draws as f64;
        let se = (f * (1.0 - f) / draws as f64).sqrt();
        assert!((p - f).abs() < 3.0 * se, "{p} vs {f} ± {se}");

        assert!(success_prob_single(1e3, 0.1, 20.0, d).unwrap() < 1e-3);
        assert_eq!(success_prob_single(0.0, 0.0, 20.0, d).unwrap(), 1.0);
        assert_eq!(success_prob_single(0.0, 0.1, 20.0, d).unwrap(), 0.0);
        assert!(matches!(success_prob_single(1.0, 1.0, 20.0, d), Err(Error::Domain(_))));
        let mut prev = 1.0;
        for i in 0..20 {
            let p = success_prob_single(0.3, i as f64 / 20.0, 20.0, d).unwrap();
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn min_success_examples() {
        let one = success_prob_single(0.5, 0.05, 30.0, 30).unwrap();
        assert_eq!(success_prob_min(1, 0.5, 0.05, 30.0, 30).unwrap(), one);
        let p = success_prob_single(1.0, 0.2, 50.0, 50).unwrap();
        assert!(p < 1e-4);
        let min = success_prob_min(10, 1.0, 0.2, 50.0, 50).unwrap();
        assert!((min / (10.0 * p) - 1.0).abs() < 0.01);
    }

    #[test]
    fn min_success_matches_monte_carlo_grid() {
        // (λ, d, σ, ε), ‖x*‖² = d.
        let grid = [
            (10usize, 5usize, 0.6, 0.05),
            (30, 10, 0.5, 0.1),
            (100, 20, 0.48, 0.1),
            (5, 2, 1.0, 0.0),
            (50, 40, 0.3, 0.02),
            (200, 30, 0.42, 0.15),
        ];
        for (i, &(lambda, d, sigma, eps)) in grid.iter().enumerate() {
            let n = d as f64;
            let want = success_prob_min(lambda, sigma, eps, n, d).unwrap();
            let mut rng = seed::stream(100 + i as u64);
            let trials = 20_000;
            let draws_hit = (0..trials)
                .filter(|_| RotatedDraws::sample(&mut rng, lambda, d, n).min_distance_sq(sigma) <= (1.0 - eps) * n)
                .count();
            let f = draws_hit as f64 / trials as f64;
            let se = (want * (1.0 - want) / trials as f64).sqrt().max(1e-9);
            assert!((f - want).abs() < 3.0 * se + 1e-12, "cell {i}: {f} vs {want} ± {se}");
        }
    }

    #[test]
    fn bound_examples() {
        let b = central_concentration_bound(100, 0.5).unwrap();
        assert!((b - 0.087_873_8).abs() < 1e-7, "{b}");
        assert_eq!(central_concentration_bound(7, 0.0).unwrap(), 2.0);
        assert!(central_concentration_bound(7, 1.5).is_err());
        let d = 40usize;
        let mu = d as f64;
        let x = 2.0 * mu + d as f64;
        let want = (-3.0 * d as f64 / 4.0).exp();
        assert!((noncentral_lower_tail_bound(x, d, mu).unwrap() - want).abs() < 1e-15 * want.max(1.0));
        assert!(noncentral_lower_tail_bound(0.0, d, mu).is_err());
        let mut prev = 1.0;
        for i in 1..50 {
            let b = noncentral_lower_tail_bound(i as f64, 50, 100.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn envelope_spot_values() {
        let e = envelope(100, 10_000, 0.5, 10_000.0).unwrap();
        let ratio = e.sigma_tilde_sq * 1e4 / 100f64.ln();
        assert!((4.0..=16.0).contains(&ratio), "{ratio}");
        assert!(e.eps_upper > 0.0 && e.a_tilde.is_finite());
        assert!((e.a_tilde - 20.8).abs() < 0.1, "{}", e.a_tilde);
        let a: Vec<f64> = [10usize, 100, 1000].iter().map(|&l| a_tilde(l, 0.5)).collect();
        assert!(a[0] < a[1] && a[1] < a[2]);
        assert!(matches!(envelope(100, 50, 0.5, 50.0), Err(Error::Regime(_))));
    }

    #[test]
    fn envelope_sup_matches_grid_search() {
        for (lambda, d, n) in [(100usize, 10_000usize, 10_000.0), (1000, 100_000, 99_000.0), (10, 5_000, 5_100.0)] {
            let e = envelope(lambda, d, 0.6, n).unwrap();
            let df = d as f64;
            let best = (1..=100_000)
                .map(|i| gain_bound(e.a_tilde, n, df, e.sigma_tilde_sq * i as f64 / 100_000.0))
                .fold(f64::NEG_INFINITY, f64::max)
                / n;
            assert!(e.eps_upper >= best - 1e-12, "{} < {best}", e.eps_upper);
            assert!(e.eps_upper - best < 1e-6 * best, "{} vs {best}", e.eps_upper);
        }
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(0.0, 10, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277_532).abs() < 1e-5);
        let (lo, hi) = wilson_interval(80.0, 100, Z95);
        assert!((lo - 0.711_170).abs() < 1e-5 && (hi - 0.866_633).abs() < 1e-5);
    }

    #[test]
    fn success_check_small_case() {
        let mut cfg = TheoryCheckConfig::new(200, 100, 2000, 9);
        cfg.c1 = 0.5;
        let r = theorem1_check(&cfg).unwrap();
        assert!(r.ci_low <= r.frequency && r.frequency <= r.ci_high);
        assert!(r.discrepancy_z() < 4.0, "{r:?}");
        assert_eq!(r, theorem1_check(&cfg).unwrap());
        let mut zero = cfg;
        zero.c1 = 0.0;
        assert!(theorem1_check(&zero).unwrap().frequency >= r.frequency);
        let json = serde_json::to_value(r).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 10);
        for k in ["d", "lambda", "delta", "c1", "c2", "reps", "frequency", "ci_low", "ci_high", "closed_form"] {
            assert!(keys.contains(&k), "{k}");
        }
    }

    #[test]
    fn routes_agree_in_distribution() {
        let mut cfg = TheoryCheckConfig::new(30, 50, 4000, 1);
        cfg.c1 = 0.3;
        let a = theorem1_check(&cfg).unwrap();
        cfg.route = McRoute::Materialized;
        let b = theorem1_check(&cfg).unwrap();
        let se = (a.frequency * (1.0 - a.frequency) * 2.0 / 4000.0).sqrt();
        assert!((a.frequency - b.frequency).abs() < 4.0 * se, "{} vs {}", a.frequency, b.frequency);
        assert!(b.discrepancy_z() < 4.0);
    }

    #[test]
    fn config_validation() {
        let ok = TheoryCheckConfig::new(100, 10, 5, 0);
        assert!(ok.validate().is_ok());
        for bad in [
            TheoryCheckConfig { delta: 0.4, ..ok },
            TheoryCheckConfig { delta: 1.0, ..ok },
            TheoryCheckConfig { c2: 0.0, ..ok },
            TheoryCheckConfig { c1: -1.0, ..ok },
            TheoryCheckConfig { reps: 0, ..ok },
            TheoryCheckConfig { c1: 100.0, ..ok },
            TheoryCheckConfig { lambda: 1, ..ok },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn critical_gain_shrinks_with_large_variance() {
        let near_opt = critical_gain(2000, 100, 1.0, 0.5, 200, 4).unwrap();
        let wide = critical_gain(2000, 100, 64.0, 0.5, 200, 4).unwrap();
        assert!(near_opt > 0.0);
        assert!(wide < near_opt, "{wide} vs {near_opt}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn noncentral_monotone_in_x(d in 1usize..60, mu in 0.0f64..200.0, a in 0.0f64..400.0, b in 0.0f64..400.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(noncentral_chi2_cdf(lo, d, mu).unwrap() <= noncentral_chi2_cdf(hi, d, mu).unwrap() + 1e-12);
        }

        #[test]
        fn noncentral_antitone_in_mu(d in 1usize..60, x in 0.0f64..400.0, a in 0.0f64..200.0, b in 0.0f64..200.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(noncentral_chi2_cdf(x, d, hi).unwrap() <= noncentral_chi2_cdf(x, d, lo).unwrap() + 1e-12);
        }

        #[test]
        fn noncentral_in_unit_interval(d in 1usize..2000, mu in 0.0f64..1e5, x in 0.0f64..2e5) {
            let p = noncentral_chi2_cdf(x, d, mu).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn wilson_contains_estimate(n in 1usize..10_000, frac in 0.0f64..=1.0) {
            let k = (frac * n as f64).round();
            let (lo, hi) = wilson_interval(k, n, Z95);
            let p = k / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        }
    }
}
