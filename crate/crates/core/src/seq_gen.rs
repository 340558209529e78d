//! Unit-cube designs: uniform random, Halton, Hammersley, their scrambled
//! variants, and Latin Hypercube Sampling.
//!
//! Every design is a λ×d matrix stored row-major with all coordinates in the
//! half-open cube [0,1)^d. Low-discrepancy indices start at 1: index 0 would be
//! the all-zeros point, which the Gaussian transform maps to −∞.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::io::join_reals;
use crate::seed::{self, purpose};

/// Number of primes available as Halton bases.
pub const PRIME_COUNT: usize = 20_000;

/// Digit depth of the scrambling permutations.
pub const SCRAMBLE_DEPTH: usize = 32;

/// Largest double strictly below 1.
pub(crate) const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

// The 20000-th prime is 224_737.
const SIEVE_LIMIT: usize = 224_738;

/// The first [`PRIME_COUNT`] primes, in increasing order.
pub fn primes() -> &'static [u32] {
    static TABLE: OnceLock<Vec<u32>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut composite = vec![false; SIEVE_LIMIT];
        let mut out = Vec::with_capacity(PRIME_COUNT);
        for n in 2..SIEVE_LIMIT {
            if composite[n] {
                continue;
            }
            out.push(n as u32);
            let mut m = n * n;
            while m < SIEVE_LIMIT {
                composite[m] = true;
                m += n;
            }
        }
        assert_eq!(out.len(), PRIME_COUNT);
        out
    })
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let n = u64::from(n);
    let mut k = 2u64;
    while k * k <= n {
        if n % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignFamily {
    UniformRandom,
    Halton,
    Hammersley,
    ScrambledHalton,
    ScrambledHammersley,
    Lhs,
}

impl DesignFamily {
    pub const ALL: [DesignFamily; 6] = [
        DesignFamily::UniformRandom,
        DesignFamily::Halton,
        DesignFamily::Hammersley,
        DesignFamily::ScrambledHalton,
        DesignFamily::ScrambledHammersley,
        DesignFamily::Lhs,
    ];

    pub fn token(self) -> &'static str {
        match self {
            DesignFamily::UniformRandom => "uniform",
            DesignFamily::Halton => "halton",
            DesignFamily::Hammersley => "hammersley",
            DesignFamily::ScrambledHalton => "scrambled-halton",
            DesignFamily::ScrambledHammersley => "scrambled-hammersley",
            DesignFamily::Lhs => "lhs",
        }
    }

    /// Whether the family consumes its seed.
    pub fn is_randomized(self) -> bool {
        !matches!(self, DesignFamily::Halton | DesignFamily::Hammersley)
    }
}

impl fmt::Display for DesignFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DesignFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DesignFamily::ALL
            .into_iter()
            .find(|f| f.token() == s)
            .ok_or_else(|| Error::Parse(format!("unknown design family `{s}`")))
    }
}

/// A λ×d design in [0,1)^d.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitDesign {
    points: Vec<f64>,
    lambda: usize,
    dim: usize,
    family: DesignFamily,
    seed: u64,
}

impl UnitDesign {
    fn from_parts(points: Vec<f64>, lambda: usize, dim: usize, family: DesignFamily, seed: u64) -> Self {
        debug_assert_eq!(points.len(), lambda * dim);
        debug_assert!(points.iter().all(|&u| (0.0..1.0).contains(&u)));
        UnitDesign { points, lambda, dim, family, seed }
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> DesignFamily {
        self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// One row per point, comma-separated, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for row in self.rows() {
            writeln!(w, "{}", join_reals(row))?;
        }
        Ok(())
    }
}

fn check_shape(lambda: usize, dim: usize) -> Result<()> {
    ensure!(lambda >= 1, InvalidArgument, "lambda must be at least 1, got {lambda}");
    ensure!(dim >= 1, InvalidArgument, "dim must be at least 1, got {dim}");
    Ok(())
}

fn check_bases(count: usize) -> Result<()> {
    ensure!(
        count <= PRIME_COUNT,
        Capacity,
        "{count} prime bases requested but only {PRIME_COUNT} are tabulated"
    );
    Ok(())
}

/// Base-`base` digit reversal of `index`: Σ a_k b^{-(k+1)} for index = Σ a_k b^k.
pub fn radical_inverse(index: u64, base: u32) -> Result<f64> {
    ensure!(is_prime(base), InvalidArgument, "radical inverse base must be a prime ≥ 2, got {base}");
    Ok(radical_inverse_unchecked(index, base))
}

#[inline]
fn radical_inverse_unchecked(mut index: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let inv = 1.0 / f64::from(base);
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % b) as f64 * f;
        index /= b;
        f *= inv;
    }
    r
}

/// Halton points 1..=λ with the first `dim` primes as bases.
pub fn halton_design(lambda: usize, dim: usize) -> Result<UnitDesign> {
    check_shape(lambda, dim)?;
    check_bases(dim)?;
    let bases = &primes()[..dim];
    let mut points = Vec::with_capacity(lambda * dim);
    for i in 1..=lambda as u64 {
        points.extend(bases.iter().map(|&b| radical_inverse_unchecked(i, b)));
    }
    Ok(UnitDesign::from_parts(points, lambda, dim, DesignFamily::Halton, 0))
}

/// Hammersley points: first axis (i − ½)/λ, remaining axes Halton with the
/// first `dim − 1` primes.
pub fn hammersley_design(lambda: usize, dim: usize) -> Result<UnitDesign> {
    check_shape(lambda, dim)?;
    check_bases(dim - 1)?;
    let bases = &primes()[..dim - 1];
    let mut points = Vec::with_capacity(lambda * dim);
    for i in 1..=lambda as u64 {
        points.push((i as f64 - 0.5) / lambda as f64);
        points.extend(bases.iter().map(|&b| radical_inverse_unchecked(i, b)));
    }
    Ok(UnitDesign::from_parts(points, lambda, dim, DesignFamily::Hammersley, 0))
}

/// Per-base, per-digit-depth digit permutations.
///
/// Only the permutation entries that indices `1..=max_index` can reach are
/// materialized; entries are drawn by a forward Fisher–Yates shuffle, so any
/// prefix is exactly the prefix of a uniformly random permutation of
/// {0, …, b−1}. Digit positions at or beyond the length of `max_index` only
/// ever see the digit 0; their contribution is folded into a constant tail.
#[derive(Clone, Debug)]
pub struct DigitScrambler {
    axes: Vec<ScrambledAxis>,
    max_index: u64,
}

#[derive(Clone, Debug)]
struct ScrambledAxis {
    base: u32,
    perms: Vec<Vec<u32>>,
    tail: f64,
}

fn digit_count(mut n: u64, base: u64) -> usize {
    let mut count = 0;
    while n > 0 {
        count += 1;
        n /= base;
    }
    count
}

/// First `m` entries of a forward Fisher–Yates shuffle of 0..b.
fn partial_shuffle<R: Rng>(rng: &mut R, b: u32, m: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(m);
    if (m as u64) * 4 >= u64::from(b) {
        let mut dense: Vec<u32> = (0..b).collect();
        for i in 0..m {
            let j = rng.random_range(i as u32..b) as usize;
            dense.swap(i, j);
            out.push(dense[i]);
        }
    } else {
        let mut moved: HashMap<u32, u32> = HashMap::with_capacity(2 * m);
        for i in 0..m as u32 {
            let j = rng.random_range(i..b);
            let vi = *moved.get(&i).unwrap_or(&i);
            let vj = *moved.get(&j).unwrap_or(&j);
            moved.insert(j, vi);
            out.push(vj);
        }
    }
    out
}

impl DigitScrambler {
    fn build(bases: &[u32], max_index: u64, mut perm: impl FnMut(u32, usize, usize) -> Vec<u32>) -> Self {
        let axes = bases
            .iter()
            .map(|&base| {
                let b = u64::from(base);
                let len = digit_count(max_index, b).min(SCRAMBLE_DEPTH);
                let mut perms = Vec::with_capacity(len);
                let mut reach = max_index;
                for k in 0..len {
                    let m = (reach + 1).min(b) as usize;
                    perms.push(perm(base, k, m));
                    reach /= b;
                }
                let inv = 1.0 / f64::from(base);
                let mut f = inv.powi(len as i32 + 1);
                let mut tail = 0.0;
                for k in len..SCRAMBLE_DEPTH {
                    tail += f64::from(perm(base, k, 1)[0]) * f;
                    f *= inv;
                }
                ScrambledAxis { base, perms, tail }
            })
            .collect();
        DigitScrambler { axes, max_index }
    }

    /// Seeded random permutations for each base and digit depth.
    pub fn random(seed: u64, bases: &[u32], max_index: u64) -> Self {
        Self::build(bases, max_index, |base, k, m| {
            let mut rng = seed::stream(seed::derive(seed, &[purpose::SCRAMBLE, u64::from(base), k as u64]));
            partial_shuffle(&mut rng, base, m)
        })
    }

    /// Identity permutations; scrambling with these is a no-op.
    pub fn identity(bases: &[u32], max_index: u64) -> Self {
        Self::build(bases, max_index, |_, _, m| (0..m as u32).collect())
    }

    pub fn axes(&self) -> usize {
        self.axes.len()
    }

    /// Scrambled radical inverse of `index` on axis `axis`.
    pub fn apply(&self, axis: usize, index: u64) -> f64 {
        assert!(index <= self.max_index, "index {index} beyond scrambler range {}", self.max_index);
        let ax = &self.axes[axis];
        let b = u64::from(ax.base);
        let inv = 1.0 / f64::from(ax.base);
        let mut i = index;
        let mut f = inv;
        let mut r = 0.0;
        for perm in &ax.perms {
            r += f64::from(perm[(i % b) as usize]) * f;
            i /= b;
            f *= inv;
        }
        // Digits past the scrambling depth stay as they are.
        while i > 0 {
            r += (i % b) as f64 * f;
            i /= b;
            f *= inv;
        }
        (r + ax.tail).min(ONE_BELOW)
    }
}

/// Applies seeded digit scrambling to a Halton or Hammersley design.
pub fn scramble(design: &UnitDesign, seed: u64) -> Result<UnitDesign> {
    let bases = scramble_bases(design)?;
    let scrambler = DigitScrambler::random(seed, bases, design.lambda as u64);
    let mut out = scramble_with(design, &scrambler)?;
    out.seed = seed;
    Ok(out)
}

fn scramble_bases(design: &UnitDesign) -> Result<&'static [u32]> {
    match design.family {
        DesignFamily::Halton => Ok(&primes()[..design.dim]),
        DesignFamily::Hammersley => Ok(&primes()[..design.dim - 1]),
        other => Err(Error::InvalidArgument(format!(
            "scrambling applies to halton or hammersley designs, not {other}"
        ))),
    }
}

/// Scrambles with an explicit set of permutations. The Hammersley first axis
/// is a regular grid and is left untouched.
pub fn scramble_with(design: &UnitDesign, scrambler: &DigitScrambler) -> Result<UnitDesign> {
    let bases = scramble_bases(design)?;
    ensure!(
        scrambler.axes.len() == bases.len()
            && scrambler.axes.iter().zip(bases).all(|(a, &b)| a.base == b),
        InvalidArgument,
        "scrambler bases do not match the design"
    );
    ensure!(
        scrambler.max_index >= design.lambda as u64,
        InvalidArgument,
        "scrambler covers indices up to {} but the design has {} points",
        scrambler.max_index,
        design.lambda
    );
    let (lambda, dim) = (design.lambda, design.dim);
    let mut points = Vec::with_capacity(lambda * dim);
    let family = match design.family {
        DesignFamily::Halton => {
            for i in 1..=lambda as u64 {
                points.extend((0..dim).map(|j| scrambler.apply(j, i)));
            }
            DesignFamily::ScrambledHalton
        }
        _ => {
            for (i, row) in (1..=lambda as u64).zip(design.rows()) {
                points.push(row[0]);
                points.extend((0..dim - 1).map(|j| scrambler.apply(j, i)));
            }
            DesignFamily::ScrambledHammersley
        }
    };
    Ok(UnitDesign::from_parts(points, lambda, dim, family, design.seed))
}

pub fn scrambled_halton_design(lambda: usize, dim: usize, seed: u64) -> Result<UnitDesign> {
    scramble(&halton_design(lambda, dim)?, seed)
}

pub fn scrambled_hammersley_design(lambda: usize, dim: usize, seed: u64) -> Result<UnitDesign> {
    scramble(&hammersley_design(lambda, dim)?, seed)
}

/// Latin Hypercube Sampling: each column is an independent random stratum
/// permutation with uniform jitter inside each stratum.
pub fn lhs_design(lambda: usize, dim: usize, seed: u64) -> Result<UnitDesign> {
    check_shape(lambda, dim)?;
    let mut rng = seed::stream(seed);
    let mut points = vec![0.0; lambda * dim];
    let mut perm: Vec<usize> = (0..lambda).collect();
    let width = lambda as f64;
    for j in 0..dim {
        perm.shuffle(&mut rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            points[i * dim + j] = ((stratum as f64 + u) / width).min(ONE_BELOW);
        }
    }
    Ok(UnitDesign::from_parts(points, lambda, dim, DesignFamily::Lhs, seed))
}

/// I.i.d. uniform coordinates.
pub fn uniform_design(lambda: usize, dim: usize, seed: u64) -> Result<UnitDesign> {
    check_shape(lambda, dim)?;
    let mut rng = seed::stream(seed);
    let points = (0..lambda * dim).map(|_| rng.random::<f64>()).collect();
    Ok(UnitDesign::from_parts(points, lambda, dim, DesignFamily::UniformRandom, seed))
}

/// Builds a design of any family. Deterministic families ignore `seed`.
pub fn generate(family: DesignFamily, lambda: usize, dim: usize, seed: u64) -> Result<UnitDesign> {
    match family {
        DesignFamily::UniformRandom => uniform_design(lambda, dim, seed),
        DesignFamily::Halton => halton_design(lambda, dim),
        DesignFamily::Hammersley => hammersley_design(lambda, dim),
        DesignFamily::ScrambledHalton => scrambled_halton_design(lambda, dim, seed),
        DesignFamily::ScrambledHammersley => scrambled_hammersley_design(lambda, dim, seed),
        DesignFamily::Lhs => lhs_design(lambda, dim, seed),
    }
}
