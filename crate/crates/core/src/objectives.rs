//! Benchmark functions with a translated optimum, and simple regret.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::gaussianize::GaussianDesign;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Sphere,
    Cigar,
    Ellipsoid,
    Rastrigin,
    Hm,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 5] = [
        ObjectiveKind::Sphere,
        ObjectiveKind::Cigar,
        ObjectiveKind::Ellipsoid,
        ObjectiveKind::Rastrigin,
        ObjectiveKind::Hm,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ObjectiveKind::Sphere => "sphere",
            ObjectiveKind::Cigar => "cigar",
            ObjectiveKind::Ellipsoid => "ellipsoid",
            ObjectiveKind::Rastrigin => "rastrigin",
            ObjectiveKind::Hm => "hm",
        }
    }

    /// Stable integer used when deriving per-objective seeds.
    pub(crate) fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| Error::Parse(format!("unknown objective `{s}` (expected sphere, cigar, ellipsoid, rastrigin or hm)")))
    }
}

/// x* ~ N(0, I_d) from the stream seeded by `seed`.
pub fn sample_optimum(dim: usize, seed: u64) -> Result<Vec<f64>> {
    ensure!(dim >= 1, InvalidArgument, "dim must be at least 1");
    let mut rng = seed::stream(seed);
    Ok((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

/// An objective with its optimum fixed. The infimum is 0 for every kind.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveInstance {
    kind: ObjectiveKind,
    optimum: Vec<f64>,
    weights: Vec<f64>,
}

impl ObjectiveInstance {
    pub fn new(kind: ObjectiveKind, optimum: Vec<f64>) -> Result<Self> {
        ensure!(!optimum.is_empty(), InvalidArgument, "optimum must have at least one coordinate");
        ensure!(optimum.iter().all(|v| v.is_finite()), InvalidArgument, "optimum must be finite");
        let d = optimum.len();
        let weights = match kind {
            ObjectiveKind::Cigar => (0..d).map(|i| if i == 0 { 1.0 } else { 1e6 }).collect(),
            ObjectiveKind::Ellipsoid if d > 1 => {
                (0..d).map(|i| 10f64.powf(6.0 * i as f64 / (d - 1) as f64)).collect()
            }
            _ => Vec::new(),
        };
        Ok(ObjectiveInstance { kind, optimum, weights })
    }

    /// Draws x* with [`sample_optimum`].
    pub fn sample(kind: ObjectiveKind, dim: usize, seed: u64) -> Result<Self> {
        Self::new(kind, sample_optimum(dim, seed)?)
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    pub fn infimum(&self) -> f64 {
        0.0
    }

    /// f(x). Errors if `x` has the wrong length.
    ///
    /// ```
    /// use oneshot_doe::objectives::{ObjectiveInstance, ObjectiveKind};
    /// let f = ObjectiveInstance::new(ObjectiveKind::Cigar, vec![0.0; 3]).unwrap();
    /// assert_eq!(f.eval(&[1.0, 1.0, 1.0]).unwrap(), 1.0 + 2e6);
    /// ```
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        ensure!(
            x.len() == self.dim(),
            InvalidArgument,
            "point has length {} but the objective has dim {}",
            x.len(),
            self.dim()
        );
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let z = x.iter().zip(&self.optimum).map(|(a, b)| a - b);
        match self.kind {
            ObjectiveKind::Sphere => z.map(|v| v * v).sum(),
            ObjectiveKind::Cigar => z.zip(&self.weights).map(|(v, w)| w * v * v).sum(),
            ObjectiveKind::Ellipsoid if self.weights.is_empty() => z.map(|v| v * v).sum(),
            ObjectiveKind::Ellipsoid => z.zip(&self.weights).map(|(v, w)| w * v * v).sum(),
            // 10d + Σ(z² − 10 cos 2πz), summed termwise so z = 0 gives exactly 0.
            ObjectiveKind::Rastrigin => z.map(|v| v * v + 10.0 * (1.0 - (TAU * v).cos())).sum(),
            ObjectiveKind::Hm => z
                .map(|v| if v == 0.0 { 0.0 } else { v * v * (1.1 + v.recip().cos()) })
                .sum(),
        }
    }
}

/// min_i f(x_i) − inf f over the rows of `design`.
///
/// ```
/// use oneshot_doe::gaussianize::{sample_gaussian_direct};
/// use oneshot_doe::objectives::{simple_regret, ObjectiveInstance, ObjectiveKind};
/// let f = ObjectiveInstance::new(ObjectiveKind::Sphere, vec![1.0, 2.0]).unwrap();
/// let zeros = sample_gaussian_direct(4, 2, 0.0, 0).unwrap();
/// assert_eq!(simple_regret(&f, &zeros).unwrap(), 5.0);
/// ```
pub fn simple_regret(instance: &ObjectiveInstance, design: &GaussianDesign) -> Result<f64> {
    ensure!(
        design.dim() == instance.dim(),
        InvalidArgument,
        "design dim {} does not match objective dim {}",
        design.dim(),
        instance.dim()
    );
    ensure!(design.lambda() >= 1, InvalidArgument, "design has no points");
    let best = design.rows().map(|x| instance.eval_unchecked(x)).fold(f64::INFINITY, f64::min);
    Ok((best - instance.infimum()).max(0.0))
}
