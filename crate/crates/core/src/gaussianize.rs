//! From unit-cube designs to rescaled Gaussian designs.
//!
//! A unit point h ∈ [0,1)^d becomes x = σ·Φ⁻¹(h) coordinatewise. The scale σ
//! is chosen by a [`ScalingRule`]; the rule that matters most here is
//! [`ScalingRule::MetaTuneRecentering`], σ = √(ln λ / d), which shrinks the
//! sample toward the prior's center as the dimension grows relative to the
//! log of the budget.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::io::join_reals;
use crate::seed;
use crate::seq_gen::{DesignFamily, UnitDesign};

/// Lower clamp applied to unit inputs before the quantile transform.
pub const UNIT_CLAMP: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

const U_MAX: f64 = 0.341_344_746_068_542_9; // Φ(1) − ½

/// Standard normal quantile Φ⁻¹(u) for u ∈ (0, 1).
///
/// ```
/// use oneshot_doe::gaussianize::inv_norm_cdf;
/// assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
/// assert!((inv_norm_cdf(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
/// assert!(inv_norm_cdf(1.0).is_err());
/// ```
pub fn inv_norm_cdf(u: f64) -> Result<f64> {
    ensure!(u > 0.0 && u < 1.0, Domain, "normal quantile requires 0 < u < 1, got {u}");
    Ok(inv_norm_cdf_unchecked(u))
}

/// Φ⁻¹ without the domain check. Piecewise (5,5) minimax rationals: one on
/// the central band in u − ½, five in r = √(−ln p) for the tails.
#[inline]
pub(crate) fn inv_norm_cdf_unchecked(p: f64) -> f64 {
    let u = p - 0.5;
    if u.abs() < U_MAX {
        central_quantile(u)
    } else if u > 0.0 {
        -tail_quantile(1.0 - p)
    } else {
        tail_quantile(p)
    }
}

#[inline]
fn central_quantile(u: f64) -> f64 {
    let s = U_MAX * U_MAX - u * u;
    u * ((2.929_589_546_983_088_05
        + s * (5.026_057_216_730_310_3e1
            + s * (3.018_705_419_229_339_37e2
                + s * (7.499_778_145_665_792_4e2
                    + s * (6.904_892_420_614_086_12e2
                        + s * (1.342_332_435_026_538_64e2 - 7.589_398_814_012_592_42 * s))))))
        / (1.0
            + s * (1.891_853_807_457_459_8e1
                + s * (1.294_041_204_487_552_81e2
                    + s * (3.868_212_085_404_174_53e2
                        + s * (4.791_239_145_097_567_57e2 + 1.792_270_085_081_026_28e2 * s))))))
}

/// Φ⁻¹(p) for p ≤ Φ(−1).
#[inline]
fn tail_quantile(p: f64) -> f64 {
    let r = (-p.ln()).sqrt();
    if r < 2.05 {
        (3.691_562_302_945_566_191
            + r * (4.717_059_060_074_068_944_9e1
                + r * (6.545_129_211_026_145_460_9e1
                    + r * (-7.459_468_772_604_592_682_1e1
                        + r * (-8.338_389_400_363_696_972_2e1 - 1.305_407_234_049_409_370_4e1 * r)))))
            / (1.0
                + r * (2.083_721_132_869_775_372_6e1
                    + r * (7.181_381_218_257_925_545_9e1
                        + r * (5.927_012_255_604_607_771_7e1
                            + r * (9.221_688_797_873_743_230_3 + 1.829_517_485_205_353_057_9e-4 * r)))))
    } else if r < 3.41 {
        (3.234_017_911_631_797_028_8
            + r * (1.449_177_828_689_122_096e1
                + r * (6.839_737_025_659_153_287_8e-1
                    + r * (-1.812_544_277_917_891_83e1
                        + r * (-1.005_916_339_568_646_151e1 - 1.201_314_787_943_552_557_4 * r)))))
            / (1.0
                + r * (8.882_093_177_330_433_752_5
                    + r * (1.465_637_066_517_679_971_2e1
                        + r * (7.136_981_105_610_976_874_5
                            + r * (8.488_489_219_914_925_546_9e-1 + 1.095_757_609_882_959_532_3e-5 * r)))))
    } else if r < 6.7 {
        (3.125_223_578_008_758_480_7
            + r * (9.948_372_431_703_656_067_6
                + r * (-5.163_392_911_552_553_462_8
                    + r * (-1.107_053_468_930_936_806_1e1
                        + r * (-2.869_906_133_588_252_674_4 - 1.541_431_949_401_359_749_2e-1 * r)))))
            / (1.0
                + r * (7.076_769_154_309_171_622
                    + r * (8.108_634_112_236_153_240_7
                        + r * (2.030_707_606_430_904_361_3
                            + r * (1.089_797_223_413_182_890_1e-1 + 1.356_598_356_444_129_763_4e-7 * r)))))
    } else if r < 12.9 {
        (2.616_126_495_089_728_368_1
            + r * (2.250_881_388_987_032_271
                + r * (-3.688_196_041_019_692_267
                    + r * (-2.964_425_135_315_060_566_3
                        + r * (-4.759_516_954_678_321_643_6e-1 - 1.612_303_318_390_145_052e-2 * r)))))
            / (1.0
                + r * (3.251_745_516_903_592_149_5
                    + r * (2.128_203_027_215_318_819_4
                        + r * (3.366_374_640_562_640_016_4e-1
                            + r * (1.140_008_728_217_759_435_9e-2 + 3.084_809_357_096_678_729_1e-9 * r)))))
    } else {
        (2.322_684_904_787_230_295_5
            + r * (-4.279_965_073_450_209_429_7e-2
                + r * (-2.589_445_156_846_572_843_2
                    + r * (-8.638_518_121_921_375_884_7e-1
                        + r * (-6.512_759_375_378_167_240_4e-2 - 1.056_635_772_720_258_540_2e-3 * r)))))
            / (1.0
                + r * (1.936_131_611_925_441_220_6
                    + r * (6.132_084_132_919_749_334_1e-1
                        + r * (4.605_497_451_247_444_318_9e-2
                            + r * (7.471_447_992_167_225_483e-4 + 2.313_534_320_630_488_781_8e-11 * r)))))
    }
}

/// How the standard deviation σ of a Gaussian design is chosen from (λ, d).
/// All logarithms are natural.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScalingRule {
    Fixed(f64),
    /// σ = 0: every point collapses onto the center.
    Midpoint,
    /// σ = 1, the prior's own scale.
    Naive,
    /// σ = (1 + ln λ) / (4 ln d), requires d ≥ 2.
    MetaRecentering,
    /// σ = √(ln λ / d).
    MetaTuneRecentering,
    /// σ = min{1, √(ln λ / d)}.
    MetaTuneRecenteringClamped,
}

impl ScalingRule {
    pub fn token(&self) -> String {
        match self {
            ScalingRule::Fixed(s) => format!("fixed:{s}"),
            ScalingRule::Midpoint => "midpoint".into(),
            ScalingRule::Naive => "naive".into(),
            ScalingRule::MetaRecentering => "meta-recentering".into(),
            ScalingRule::MetaTuneRecentering => "meta-tune-recentering".into(),
            ScalingRule::MetaTuneRecenteringClamped => "meta-tune-recentering-clamped".into(),
        }
    }

    /// Resolves the rule for a budget λ and dimension d.
    pub fn bind(self, lambda: usize, dim: usize) -> Result<BoundScaling> {
        let sigma = resolve_sigma(self, lambda, dim)?;
        Ok(BoundScaling { rule: self, lambda, dim, sigma })
    }
}

impl fmt::Display for ScalingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// A [`ScalingRule`] bound to (λ, d) with its σ cached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundScaling {
    pub rule: ScalingRule,
    pub lambda: usize,
    pub dim: usize,
    pub sigma: f64,
}

/// σ for `rule` at budget `lambda` and dimension `dim`.
///
/// ```
/// use oneshot_doe::gaussianize::{resolve_sigma, ScalingRule};
/// let s = resolve_sigma(ScalingRule::MetaTuneRecentering, 100, 20).unwrap();
/// assert!((s - (100f64.ln() / 20.0).sqrt()).abs() < 1e-15);
/// assert_eq!(resolve_sigma(ScalingRule::Midpoint, 7, 3).unwrap(), 0.0);
/// ```
pub fn resolve_sigma(rule: ScalingRule, lambda: usize, dim: usize) -> Result<f64> {
    ensure!(lambda >= 1, InvalidArgument, "lambda must be at least 1");
    ensure!(dim >= 1, InvalidArgument, "dim must be at least 1");
    let ln_lambda = (lambda as f64).ln();
    let d = dim as f64;
    Ok(match rule {
        ScalingRule::Fixed(s) => {
            ensure!(s.is_finite() && s >= 0.0, InvalidArgument, "fixed sigma must be finite and non-negative, got {s}");
            s
        }
        ScalingRule::Midpoint => 0.0,
        ScalingRule::Naive => 1.0,
        ScalingRule::MetaRecentering => {
            ensure!(dim >= 2, Domain, "meta-recentering needs d ≥ 2 (ln d must be positive), got d = {dim}");
            (1.0 + ln_lambda) / (4.0 * d.ln())
        }
        ScalingRule::MetaTuneRecentering => (ln_lambda / d).sqrt(),
        ScalingRule::MetaTuneRecenteringClamped => (ln_lambda / d).sqrt().min(1.0),
    })
}

/// Where the points of a [`GaussianDesign`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Unit { family: DesignFamily, seed: u64 },
    DirectNormal { seed: u64 },
}

/// Post-processing steps applied to a design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Augmentation {
    QuasiOpposite,
    Midpoint,
}

/// A λ×d matrix of candidate points in ℝ^d.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDesign {
    points: Vec<f64>,
    lambda: usize,
    dim: usize,
    rule: ScalingRule,
    sigma: f64,
    source: Source,
    augmentations: Vec<Augmentation>,
}

impl GaussianDesign {
    /// Wraps raw row-major points, e.g. a design produced elsewhere.
    pub fn from_points(points: Vec<f64>, dim: usize, rule: ScalingRule, sigma: f64, source: Source) -> Result<Self> {
        ensure!(dim >= 1, InvalidArgument, "dim must be at least 1");
        ensure!(
            !points.is_empty() && points.len() % dim == 0,
            InvalidArgument,
            "{} coordinates do not form rows of length {dim}",
            points.len()
        );
        let lambda = points.len() / dim;
        Ok(GaussianDesign { points, lambda, dim, rule, sigma, source, augmentations: Vec::new() })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rule(&self) -> ScalingRule {
        self.rule
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn augmentations(&self) -> &[Augmentation] {
        &self.augmentations
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for row in self.rows() {
            writeln!(w, "{}", join_reals(row))?;
        }
        Ok(())
    }
}

/// x_{i,j} = σ·Φ⁻¹(h_{i,j}), σ resolved for the design's own (λ, d).
pub fn to_gaussian(design: &UnitDesign, rule: ScalingRule) -> Result<GaussianDesign> {
    let bound = rule.bind(design.lambda(), design.dim())?;
    Ok(to_gaussian_bound(design, bound))
}

/// Same as [`to_gaussian`] with σ already resolved, possibly for a
/// different budget than the design's row count.
pub fn to_gaussian_bound(design: &UnitDesign, bound: BoundScaling) -> GaussianDesign {
    let sigma = bound.sigma;
    let points = if sigma == 0.0 {
        vec![0.0; design.points().len()]
    } else {
        design
            .points()
            .iter()
            .map(|&u| sigma * inv_norm_cdf_unchecked(u.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP)))
            .collect()
    };
    GaussianDesign {
        points,
        lambda: design.lambda(),
        dim: design.dim(),
        rule: bound.rule,
        sigma,
        source: Source::Unit { family: design.family(), seed: design.seed() },
        augmentations: Vec::new(),
    }
}

/// λ i.i.d. draws from N(0, σ² I_d).
pub fn sample_gaussian_direct(lambda: usize, dim: usize, sigma: f64, seed: u64) -> Result<GaussianDesign> {
    let bound = ScalingRule::Fixed(sigma).bind(lambda, dim)?;
    Ok(sample_gaussian_bound(bound, seed))
}

pub(crate) fn sample_gaussian_bound(bound: BoundScaling, seed: u64) -> GaussianDesign {
    let n = bound.lambda * bound.dim;
    let points = if bound.sigma == 0.0 {
        vec![0.0; n]
    } else {
        let mut rng = seed::stream(seed);
        (0..n).map(|_| bound.sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    GaussianDesign {
        points,
        lambda: bound.lambda,
        dim: bound.dim,
        rule: bound.rule,
        sigma: bound.sigma,
        source: Source::DirectNormal { seed },
        augmentations: Vec::new(),
    }
}

/// Quasi-opposite sampling within the same budget: for each of the first
/// ⌈λ/2⌉ points x, emit x followed by c − r·x with r ~ U[0,1] drawn per
/// point. With odd λ the last base point has no mirror.
pub fn quasi_opposite(design: &GaussianDesign, center: &[f64], seed: u64) -> Result<GaussianDesign> {
    quasi_opposite_expand(design, design.lambda, center, seed)
}

/// Builds a λ-point quasi-opposite design from the first ⌈λ/2⌉ rows of
/// `base`, which may be shorter than λ.
pub fn quasi_opposite_expand(base: &GaussianDesign, lambda: usize, center: &[f64], seed: u64) -> Result<GaussianDesign> {
    let mut rng = seed::stream(seed);
    let factors: Vec<f64> = (0..lambda / 2).map(|_| rng.random::<f64>()).collect();
    mirror(base, lambda, center, &factors)
}

/// [`quasi_opposite`] with explicit shrink factors, one per mirrored point.
pub fn quasi_opposite_with_factors(design: &GaussianDesign, center: &[f64], factors: &[f64]) -> Result<GaussianDesign> {
    mirror(design, design.lambda, center, factors)
}

fn mirror(base: &GaussianDesign, lambda: usize, center: &[f64], factors: &[f64]) -> Result<GaussianDesign> {
    let dim = base.dim;
    ensure!(lambda >= 1, InvalidArgument, "quasi-opposite sampling needs a non-empty design");
    ensure!(
        base.lambda >= lambda.div_ceil(2),
        InvalidArgument,
        "{} base points cannot fill a quasi-opposite design of {lambda}",
        base.lambda
    );
    ensure!(center.len() == dim, InvalidArgument, "center has length {} but the design has dim {dim}", center.len());
    ensure!(
        factors.len() == lambda / 2,
        InvalidArgument,
        "expected {} mirror factors, got {}",
        lambda / 2,
        factors.len()
    );
    let mut points = Vec::with_capacity(lambda * dim);
    for (i, &r) in factors.iter().enumerate() {
        let x = base.row(i);
        points.extend_from_slice(x);
        points.extend(x.iter().zip(center).map(|(&xi, &ci)| ci - r * xi));
    }
    if lambda % 2 == 1 {
        points.extend_from_slice(base.row(lambda / 2));
    }
    let mut out = base.clone();
    out.points = points;
    out.lambda = lambda;
    out.augmentations.push(Augmentation::QuasiOpposite);
    Ok(out)
}

/// Replaces the first point by the center (the zero vector).
pub fn with_midpoint(design: &GaussianDesign) -> GaussianDesign {
    let mut out = design.clone();
    out.points[..design.dim].fill(0.0);
    out.augmentations.push(Augmentation::Midpoint);
    out
}

impl std::str::FromStr for ScalingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "midpoint" => ScalingRule::Midpoint,
            "naive" => ScalingRule::Naive,
            "meta-recentering" => ScalingRule::MetaRecentering,
            "meta-tune-recentering" => ScalingRule::MetaTuneRecentering,
            "meta-tune-recentering-clamped" => ScalingRule::MetaTuneRecenteringClamped,
            other => match other.strip_prefix("fixed:") {
                Some(v) => ScalingRule::Fixed(
                    v.parse().map_err(|_| Error::Parse(format!("bad fixed sigma `{v}`")))?,
                ),
                None => return Err(Error::Parse(format!("unknown scaling rule `{other}`"))),
            },
        })
    }
}
