//! Replicated one-shot regret experiments and their aggregation.
//!
//! Every replication is a pure function of derived seeds. Within a
//! (objective, d, λ) cell all strategies see the same optimum for a given
//! replication index, so strategy comparisons are paired.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::gaussianize::{
    quasi_opposite_expand, sample_gaussian_bound, to_gaussian_bound, with_midpoint, BoundScaling, GaussianDesign,
    ScalingRule,
};
use crate::io::format_real;
use crate::objectives::{sample_optimum, simple_regret, ObjectiveInstance, ObjectiveKind};
use crate::seed::{self, purpose};
use crate::seq_gen::{generate, DesignFamily};
use crate::stats::{self, wilson_interval, McRoute, RotatedDraws, Z95};

/// Replications per cell for the regret table.
pub const TABLE_REPS: usize = 100_000;

/// Replications per cell for tournaments.
pub const TOURNAMENT_REPS: usize = 20;

/// Replications per parallel chunk in sweeps. Fixed so that summation order
/// does not depend on the thread count.
const SWEEP_CHUNK: usize = 256;

/// Where candidate points come from before scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampler {
    Design(DesignFamily),
    /// I.i.d. normal coordinates, no unit-cube stage.
    DirectGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modifier {
    QuasiOpposite,
    Midpoint,
}

/// A named way of producing a λ-point design in ℝ^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub name: String,
    pub sampler: Sampler,
    pub rule: ScalingRule,
    pub modifiers: Vec<Modifier>,
}

/// Named strategies. `Random` is i.i.d. N(0, I); `Midpoint` puts every point
/// on the center.
pub const PRESETS: [&str; 15] = [
    "Random",
    "Midpoint",
    "LHS",
    "Halton",
    "Hammersley",
    "ScrHalton",
    "ScrHammersley",
    "MetaRecentering",
    "MetaTuneRecentering",
    "MetaTuneRecenteringClamped",
    "QORandom",
    "QOScrHammersley",
    "RandomPlusMiddlePoint",
    "ScrHammersleyPlusMiddlePoint",
    "MetaTuneRecenteringPlusMiddlePoint",
];

/// Strategies run by `doe-bench` when none are given.
pub const DEFAULT_PORTFOLIO: [&str; 11] = [
    "Random",
    "Midpoint",
    "LHS",
    "ScrHalton",
    "ScrHammersley",
    "MetaRecentering",
    "MetaTuneRecentering",
    "QORandom",
    "QOScrHammersley",
    "RandomPlusMiddlePoint",
    "ScrHammersleyPlusMiddlePoint",
];

impl Strategy {
    pub fn new(name: impl Into<String>, sampler: Sampler, rule: ScalingRule, modifiers: Vec<Modifier>) -> Result<Self> {
        let name = name.into();
        check_name(&name)?;
        Ok(Strategy { name, sampler, rule, modifiers })
    }

    /// Looks up a name in [`PRESETS`].
    pub fn preset(name: &str) -> Result<Self> {
        use DesignFamily::*;
        use Modifier::*;
        use Sampler::*;
        let (sampler, rule, modifiers) = match name {
            "Random" => (DirectGaussian, ScalingRule::Naive, vec![]),
            "Midpoint" => (DirectGaussian, ScalingRule::Midpoint, vec![]),
            "LHS" => (Design(Lhs), ScalingRule::Naive, vec![]),
            "Halton" => (Design(Halton), ScalingRule::Naive, vec![]),
            "Hammersley" => (Design(Hammersley), ScalingRule::Naive, vec![]),
            "ScrHalton" => (Design(ScrambledHalton), ScalingRule::Naive, vec![]),
            "ScrHammersley" => (Design(ScrambledHammersley), ScalingRule::Naive, vec![]),
            "MetaRecentering" => (Design(ScrambledHammersley), ScalingRule::MetaRecentering, vec![]),
            "MetaTuneRecentering" => (Design(ScrambledHammersley), ScalingRule::MetaTuneRecentering, vec![]),
            "MetaTuneRecenteringClamped" => {
                (Design(ScrambledHammersley), ScalingRule::MetaTuneRecenteringClamped, vec![])
            }
            "QORandom" => (DirectGaussian, ScalingRule::Naive, vec![QuasiOpposite]),
            "QOScrHammersley" => (Design(ScrambledHammersley), ScalingRule::Naive, vec![QuasiOpposite]),
            "RandomPlusMiddlePoint" => (DirectGaussian, ScalingRule::Naive, vec![Midpoint]),
            "ScrHammersleyPlusMiddlePoint" => (Design(ScrambledHammersley), ScalingRule::Naive, vec![Midpoint]),
            "MetaTuneRecenteringPlusMiddlePoint" => {
                (Design(ScrambledHammersley), ScalingRule::MetaTuneRecentering, vec![Midpoint])
            }
            other => return Err(Error::Parse(format!("unknown strategy `{other}`"))),
        };
        Ok(Strategy { name: name.to_string(), sampler, rule, modifiers })
    }

    /// The design used for replication seed `seed` at budget λ and dim d.
    pub fn design(&self, lambda: usize, dim: usize, seed: u64) -> Result<GaussianDesign> {
        let bound = self.rule.bind(lambda, dim)?;
        self.design_bound(bound, seed)
    }

    fn design_bound(&self, bound: BoundScaling, seed: u64) -> Result<GaussianDesign> {
        let (lambda, dim) = (bound.lambda, bound.dim);
        let qo = self.modifiers.contains(&Modifier::QuasiOpposite);
        let base_count = if qo { lambda.div_ceil(2) } else { lambda };
        let base = match self.sampler {
            Sampler::Design(family) => to_gaussian_bound(&generate(family, base_count, dim, seed)?, bound),
            Sampler::DirectGaussian => sample_gaussian_bound(BoundScaling { lambda: base_count, ..bound }, seed),
        };
        let mut design = base;
        for m in &self.modifiers {
            design = match m {
                Modifier::QuasiOpposite => {
                    quasi_opposite_expand(&design, lambda, &vec![0.0; dim], seed::derive(seed, &[purpose::MIRROR]))?
                }
                Modifier::Midpoint => with_midpoint(&design),
            };
        }
        Ok(design)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// A preset name, or `<family>/<rule>[+qo][+mid]` with family one of the
    /// unit-design tokens or `normal`, e.g. `scrambled-hammersley/meta-tune-recentering+mid`.
    fn from_str(s: &str) -> Result<Self> {
        if !s.contains('/') {
            return Strategy::preset(s);
        }
        let mut parts = s.split('+');
        let head = parts.next().unwrap_or_default();
        let (family, rule) = head
            .split_once('/')
            .ok_or_else(|| Error::Parse(format!("strategy `{s}` must look like family/rule")))?;
        let sampler = if family == "normal" { Sampler::DirectGaussian } else { Sampler::Design(family.parse()?) };
        let rule: ScalingRule = rule.parse()?;
        let modifiers = parts
            .map(|m| match m {
                "qo" => Ok(Modifier::QuasiOpposite),
                "mid" => Ok(Modifier::Midpoint),
                other => Err(Error::Parse(format!("unknown modifier `{other}` in `{s}` (expected qo or mid)"))),
            })
            .collect::<Result<_>>()?;
        Strategy::new(s, sampler, rule, modifiers)
    }
}

fn check_name(name: &str) -> Result<()> {
    ensure!(!name.is_empty(), Config, "strategy names must not be empty");
    ensure!(
        !name.contains([',', '"', '\n', '\r']),
        Config,
        "strategy name `{name}` contains a comma, quote or line break"
    );
    Ok(())
}

/// One replication's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub strategy: String,
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub lambda: usize,
    pub replication: usize,
    pub regret: f64,
    /// Seed that produced x*; not part of the CSV schema.
    pub optimum_seed: Option<u64>,
}

/// Seed of a (objective, d, λ) cell under `master`.
pub fn cell_seed(master: u64, kind: ObjectiveKind, dim: usize, lambda: usize) -> u64 {
    seed::derive(master, &[purpose::CELL, kind.code(), dim as u64, lambda as u64])
}

pub fn optimum_seed(cell: u64, replication: usize) -> u64 {
    seed::derive(cell, &[purpose::OPTIMUM, replication as u64])
}

pub fn design_seed(cell: u64, replication: usize, strategy: &str) -> u64 {
    seed::derive(cell, &[purpose::DESIGN, replication as u64, seed::tag(strategy)])
}

/// Regrets of `strategy` on `reps` replications of one cell; `seed` is the
/// cell seed.
pub fn run_cell(
    kind: ObjectiveKind,
    dim: usize,
    lambda: usize,
    strategy: &Strategy,
    reps: usize,
    seed: u64,
) -> Result<Vec<RegretRecord>> {
    let strategies = std::slice::from_ref(strategy);
    let regrets = run_cell_many(kind, dim, lambda, strategies, reps, seed)?;
    Ok(records_for(kind, dim, lambda, strategies, &regrets, seed))
}

fn check_cell(kind: ObjectiveKind, dim: usize, lambda: usize, strategies: &[Strategy], reps: usize) -> Result<()> {
    let cell = format!("{kind} d={dim} λ={lambda}");
    ensure!(reps >= 1, Config, "replications must be at least 1 (cell {cell})");
    ensure!(dim >= 1 && lambda >= 1, Config, "cell {cell} needs d ≥ 1 and λ ≥ 1");
    for s in strategies {
        check_name(&s.name)?;
        s.rule
            .bind(lambda, dim)
            .map_err(|e| Error::Config(format!("strategy {} cannot run on cell {cell}: {e}", s.name)))?;
    }
    Ok(())
}

/// Regrets indexed [replication][strategy].
fn run_cell_many(
    kind: ObjectiveKind,
    dim: usize,
    lambda: usize,
    strategies: &[Strategy],
    reps: usize,
    cell: u64,
) -> Result<Vec<Vec<f64>>> {
    check_cell(kind, dim, lambda, strategies, reps)?;
    (0..reps).into_par_iter().map(|r| replicate(kind, dim, lambda, strategies, r, cell)).collect()
}

fn replicate(kind: ObjectiveKind, dim: usize, lambda: usize, strategies: &[Strategy], r: usize, cell: u64) -> Result<Vec<f64>> {
    let instance = ObjectiveInstance::sample(kind, dim, optimum_seed(cell, r))?;
    strategies
        .iter()
        .map(|s| {
            let design = s.design(lambda, dim, design_seed(cell, r, &s.name))?;
            simple_regret(&instance, &design)
        })
        .collect()
}

fn records_for(
    kind: ObjectiveKind,
    dim: usize,
    lambda: usize,
    strategies: &[Strategy],
    regrets: &[Vec<f64>],
    cell: u64,
) -> Vec<RegretRecord> {
    let mut out = Vec::with_capacity(strategies.len() * regrets.len());
    for (j, s) in strategies.iter().enumerate() {
        for (r, row) in regrets.iter().enumerate() {
            out.push(RegretRecord {
                strategy: s.name.clone(),
                objective: kind,
                dim,
                lambda,
                replication: r,
                regret: row[j],
                optimum_seed: Some(optimum_seed(cell, r)),
            });
        }
    }
    out
}

/// A grid of cells × strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub objectives: Vec<ObjectiveKind>,
    pub dims: Vec<usize>,
    pub budgets: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub reps: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.objectives.is_empty(), Config, "objectives must not be empty");
        ensure!(!self.dims.is_empty(), Config, "dims must not be empty");
        ensure!(!self.budgets.is_empty(), Config, "budgets must not be empty");
        ensure!(!self.strategies.is_empty(), Config, "strategies must not be empty");
        ensure!(self.reps >= 1, Config, "replications must be at least 1");
        ensure!(self.dims.iter().all(|&d| d >= 1), Config, "every dim must be at least 1");
        ensure!(self.budgets.iter().all(|&l| l >= 1), Config, "every budget must be at least 1");
        let mut seen = BTreeSet::new();
        for s in &self.strategies {
            check_name(&s.name)?;
            ensure!(seen.insert(s.name.as_str()), Config, "strategy name `{}` appears twice", s.name);
        }
        Ok(())
    }
}

/// Runs every cell; records come out ordered by objective, d, λ (config
/// order), then strategy (config order), then replication.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RegretRecord>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &kind in &cfg.objectives {
        for &dim in &cfg.dims {
            for &lambda in &cfg.budgets {
                check_cell(kind, dim, lambda, &cfg.strategies, cfg.reps)?;
                cells.push((kind, dim, lambda, cell_seed(cfg.seed, kind, dim, lambda)));
            }
        }
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.reps).map(move |r| (c, r))).collect();
    let regrets: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(c, r)| {
            let (kind, dim, lambda, cell) = cells[c];
            replicate(kind, dim, lambda, &cfg.strategies, r, cell)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(regrets.len() * cfg.strategies.len());
    for (c, chunk) in regrets.chunks(cfg.reps).enumerate() {
        let (kind, dim, lambda, cell) = cells[c];
        out.extend(records_for(kind, dim, lambda, &cfg.strategies, chunk, cell));
    }
    Ok(out)
}

/// One point of a σ sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// σ / √(ln λ / d).
    pub multiple: f64,
    pub sigma: f64,
    /// Mean regret, divided by d on the sphere.
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub lambda: usize,
    pub reps: usize,
    pub seed: u64,
    /// True when means are divided by d (sphere only).
    pub normalized: bool,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// The point with the smallest mean.
    pub fn argmin(&self) -> &SweepPoint {
        self.points
            .iter()
            .min_by(|a, b| a.mean.total_cmp(&b.mean))
            .expect("sweep curves are never empty")
    }

    /// The point whose σ equals `sigma` up to 1e−12 relative.
    pub fn at_sigma(&self, sigma: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| (p.sigma - sigma).abs() <= 1e-12 * sigma.abs().max(1.0))
    }
}

/// Settings for [`SweepSpec::run`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub lambda: usize,
    /// Multiples of √(ln λ / d).
    pub multiples: Vec<f64>,
    /// Absolute σ values added to the grid.
    pub extra_sigmas: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub route: McRoute,
}

impl SweepSpec {
    pub fn base_sigma(&self) -> f64 {
        ((self.lambda as f64).ln() / self.dim as f64).sqrt()
    }

    pub fn run(&self) -> Result<SweepCurve> {
        let (kind, d, lambda) = (self.objective, self.dim, self.lambda);
        ensure!(d >= 1, Config, "dim must be at least 1");
        ensure!(lambda >= 2, Config, "a sweep needs λ ≥ 2 so that √(ln λ/d) > 0");
        ensure!(self.reps >= 1, Config, "replications must be at least 1");
        ensure!(
            !self.multiples.is_empty() || !self.extra_sigmas.is_empty(),
            Config,
            "the sweep grid is empty"
        );
        let base = self.base_sigma();
        let mut grid: Vec<(f64, f64)> = Vec::new();
        for &m in &self.multiples {
            ensure!(m.is_finite() && m >= 0.0, Config, "grid multiples must be finite and ≥ 0, got {m}");
            grid.push((m, m * base));
        }
        for &s in &self.extra_sigmas {
            ensure!(s.is_finite() && s >= 0.0, Config, "extra sigmas must be finite and ≥ 0, got {s}");
            grid.push((s / base, s));
        }
        grid.sort_by(|a, b| a.1.total_cmp(&b.1));
        grid.dedup_by(|a, b| a.1 == b.1);
        let sigmas: Vec<f64> = grid.iter().map(|g| g.1).collect();

        let cell = cell_seed(self.seed, kind, d, lambda);
        let rotated = kind == ObjectiveKind::Sphere && self.route == McRoute::Rotated;
        let scale = if kind == ObjectiveKind::Sphere { 1.0 / d as f64 } else { 1.0 };
        let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..self.reps.div_ceil(SWEEP_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut sum = vec![0.0; sigmas.len()];
                let mut sum_sq = vec![0.0; sigmas.len()];
                for r in c * SWEEP_CHUNK..((c + 1) * SWEEP_CHUNK).min(self.reps) {
                    let regrets = if rotated {
                        rotated_regrets(d, lambda, &sigmas, cell, r)
                    } else {
                        materialized_regrets(kind, d, lambda, &sigmas, cell, r)?
                    };
                    for (k, v) in regrets.into_iter().enumerate() {
                        let v = v * scale;
                        sum[k] += v;
                        sum_sq[k] += v * v;
                    }
                }
                Ok((sum, sum_sq))
            })
            .collect::<Result<_>>()?;
        let n = self.reps as f64;
        let points = grid
            .iter()
            .enumerate()
            .map(|(k, &(multiple, sigma))| {
                let s: f64 = chunks.iter().map(|c| c.0[k]).sum();
                let s2: f64 = chunks.iter().map(|c| c.1[k]).sum();
                let mean = s / n;
                let var = if self.reps > 1 { ((s2 - s * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
                SweepPoint { multiple, sigma, mean, std_error: (var / n).sqrt() }
            })
            .collect();
        Ok(SweepCurve {
            objective: kind,
            dim: d,
            lambda,
            reps: self.reps,
            seed: self.seed,
            normalized: kind == ObjectiveKind::Sphere,
            points,
        })
    }
}

fn rotated_regrets(d: usize, lambda: usize, sigmas: &[f64], cell: u64, r: usize) -> Vec<f64> {
    let mut rng = seed::stream(seed::derive(cell, &[purpose::SAMPLES, r as u64]));
    let n = stats::draw_norm_sq(&mut rng, d);
    let draws = RotatedDraws::sample(&mut rng, lambda, d, n);
    sigmas.iter().map(|&s| draws.min_distance_sq(s)).collect()
}

fn materialized_regrets(kind: ObjectiveKind, d: usize, lambda: usize, sigmas: &[f64], cell: u64, r: usize) -> Result<Vec<f64>> {
    let instance = ObjectiveInstance::new(kind, sample_optimum(d, optimum_seed(cell, r))?)?;
    let mut rng = seed::stream(seed::derive(cell, &[purpose::SAMPLES, r as u64]));
    let normals: Vec<f64> = (0..lambda * d).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = vec![0.0; d];
    Ok(sigmas
        .iter()
        .map(|&s| {
            let mut best = f64::INFINITY;
            for g in normals.chunks_exact(d) {
                for (xi, gi) in x.iter_mut().zip(g) {
                    *xi = s * gi;
                }
                best = best.min(instance.eval_unchecked(&x));
            }
            best
        })
        .collect())
}

/// Mean regret (÷ d on the sphere) along σ = m·√(ln λ/d) for each m in
/// `grid`, with i.i.d. Gaussian samples.
pub fn sigma_sweep(kind: ObjectiveKind, dim: usize, lambda: usize, grid: &[f64], reps: usize, seed: u64) -> Result<SweepCurve> {
    SweepSpec {
        objective: kind,
        dim,
        lambda,
        multiples: grid.to_vec(),
        extra_sigmas: Vec::new(),
        reps,
        seed,
        route: McRoute::Rotated,
    }
    .run()
}

/// `count` evenly spaced multiples from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

type Key = (ObjectiveKind, usize, usize, usize);

fn key_of(r: &RegretRecord) -> Key {
    (r.objective, r.dim, r.lambda, r.replication)
}

/// Pairwise winning frequencies. Rows and columns are in ranked order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub strategies: Vec<String>,
    /// `matrix[a][b]`: fraction of shared keys where a's regret beats b's,
    /// ties counting one half.
    pub matrix: Vec<Vec<f64>>,
    /// Mean of each row over the other strategies.
    pub row_means: Vec<f64>,
}

impl WinMatrix {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.strategies.iter().position(|s| s == name)
    }

    pub fn row_mean(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.row_means[i])
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.matrix[self.index_of(a)?][self.index_of(b)?])
    }
}

fn regrets_by_strategy(records: &[RegretRecord]) -> Result<Vec<(String, BTreeMap<Key, f64>)>> {
    let mut order: Vec<(String, BTreeMap<Key, f64>)> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        ensure!(
            !r.regret.is_nan(),
            Aggregation,
            "NaN regret for {} on {} d={} λ={} rep {}",
            r.strategy,
            r.objective,
            r.dim,
            r.lambda,
            r.replication
        );
        let i = *index.entry(r.strategy.as_str()).or_insert_with(|| {
            order.push((r.strategy.clone(), BTreeMap::new()));
            order.len() - 1
        });
        ensure!(
            order[i].1.insert(key_of(r), r.regret).is_none(),
            Aggregation,
            "duplicate record for {} on {} d={} λ={} rep {}",
            r.strategy,
            r.objective,
            r.dim,
            r.lambda,
            r.replication
        );
    }
    Ok(order)
}

fn score(a: f64, b: f64) -> f64 {
    if a < b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Aggregates records into a [`WinMatrix`]. Every strategy must cover the
/// same (objective, d, λ, replication) keys.
pub fn win_matrix(records: &[RegretRecord]) -> Result<WinMatrix> {
    let by = regrets_by_strategy(records)?;
    ensure!(!by.is_empty(), Aggregation, "no records to aggregate");
    let all: BTreeSet<Key> = by.iter().flat_map(|(_, m)| m.keys().copied()).collect();
    let mut missing = Vec::new();
    for (name, m) in &by {
        for k in all.iter().filter(|k| !m.contains_key(k)) {
            missing.push(format!("{name} @ {} d={} λ={} rep {}", k.0, k.1, k.2, k.3));
        }
    }
    if !missing.is_empty() {
        let shown = missing.len().min(10);
        return Err(Error::Aggregation(format!(
            "{} missing cells: {}{}",
            missing.len(),
            missing[..shown].join("; "),
            if missing.len() > shown { "; ..." } else { "" }
        )));
    }
    let s = by.len();
    let n = all.len() as f64;
    let mut matrix = vec![vec![0.5; s]; s];
    for a in 0..s {
        for b in 0..s {
            if a != b {
                let total: f64 = by[a].1.iter().zip(by[b].1.values()).map(|((_, &ra), &rb)| score(ra, rb)).sum();
                matrix[a][b] = total / n;
            }
        }
    }
    let row_means: Vec<f64> = (0..s)
        .map(|a| if s == 1 { 0.5 } else { (0..s).filter(|&b| b != a).map(|b| matrix[a][b]).sum::<f64>() / (s - 1) as f64 })
        .collect();
    let mut rank: Vec<usize> = (0..s).collect();
    rank.sort_by(|&a, &b| row_means[b].total_cmp(&row_means[a]).then_with(|| by[a].0.cmp(&by[b].0)));
    Ok(WinMatrix {
        strategies: rank.iter().map(|&i| by[i].0.clone()).collect(),
        matrix: rank.iter().map(|&i| rank.iter().map(|&j| matrix[i][j]).collect()).collect(),
        row_means: rank.iter().map(|&i| row_means[i]).collect(),
    })
}

/// Head-to-head summary of two strategies over their shared keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: String,
    pub b: String,
    pub pairs: usize,
    /// Wins of `a`, ties counting one half.
    pub wins: f64,
    pub win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean of regret_a − regret_b.
    pub mean_difference: f64,
    pub difference_se: f64,
}

pub fn paired_comparison(records: &[RegretRecord], a: &str, b: &str) -> Result<PairedComparison> {
    let by = regrets_by_strategy(records)?;
    let find = |name: &str| {
        by.iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Aggregation(format!("no records for strategy `{name}`")))
    };
    let (ma, mb) = (find(a)?, find(b)?);
    let pairs: Vec<(f64, f64)> = ma.iter().filter_map(|(k, &ra)| mb.get(k).map(|&rb| (ra, rb))).collect();
    ensure!(!pairs.is_empty(), Aggregation, "`{a}` and `{b}` share no keys");
    let n = pairs.len() as f64;
    let wins: f64 = pairs.iter().map(|&(x, y)| score(x, y)).sum();
    let diffs: Vec<f64> = pairs.iter().map(|&(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = if pairs.len() > 1 { diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let (ci_low, ci_high) = wilson_interval(wins, pairs.len(), Z95);
    Ok(PairedComparison {
        a: a.to_string(),
        b: b.to_string(),
        pairs: pairs.len(),
        wins,
        win_rate: wins / n,
        ci_low,
        ci_high,
        mean_difference: mean,
        difference_se: (var / n).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Parse(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Something [`export`] can write.
#[derive(Clone, Copy, Debug)]
pub enum Artifact<'a> {
    Records(&'a [RegretRecord]),
    Matrix(&'a WinMatrix),
    Curve(&'a SweepCurve),
}

pub const RECORDS_HEADER: &str = "strategy,objective,dim,lambda,replication,regret";

pub fn write_artifact<W: Write>(item: Artifact<'_>, w: &mut W, format: Format) -> Result<()> {
    match (item, format) {
        (Artifact::Records(records), Format::Csv) => {
            writeln!(w, "{RECORDS_HEADER}")?;
            for r in records {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.strategy,
                    r.objective,
                    r.dim,
                    r.lambda,
                    r.replication,
                    format_real(r.regret)
                )?;
            }
        }
        (Artifact::Matrix(m), Format::Csv) => {
            writeln!(w, "strategy,{},row_mean", m.strategies.join(","))?;
            for (i, name) in m.strategies.iter().enumerate() {
                let cells: Vec<String> = m.matrix[i].iter().map(|&v| format_real(v)).collect();
                writeln!(w, "{name},{},{}", cells.join(","), format_real(m.row_means[i]))?;
            }
        }
        (Artifact::Curve(c), Format::Csv) => {
            let col = if c.normalized { "mean_normalized_regret" } else { "mean_regret" };
            writeln!(w, "multiple,sigma,{col},std_error")?;
            for p in &c.points {
                writeln!(
                    w,
                    "{},{},{},{}",
                    format_real(p.multiple),
                    format_real(p.sigma),
                    format_real(p.mean),
                    format_real(p.std_error)
                )?;
            }
        }
        (Artifact::Records(r), Format::Json) => json_line(w, &r)?,
        (Artifact::Matrix(m), Format::Json) => json_line(w, m)?,
        (Artifact::Curve(c), Format::Json) => json_line(w, c)?,
    }
    Ok(())
}

fn json_line<W: Write, T: Serialize + ?Sized>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Writes `item` to `path`, replacing any existing file.
pub fn export(item: Artifact<'_>, path: &Path, format: Format) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_artifact(item, &mut w, format)?;
    w.flush()?;
    Ok(())
}

/// Reads records written in CSV form. `optimum_seed` comes back as `None`.
pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<RegretRecord>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    ensure!(header.trim_end() == RECORDS_HEADER, Parse, "unexpected records header `{header}`");
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 6, Parse, "line {}: expected 6 fields, got {}", i + 2, f.len());
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("line {}: bad integer `{s}`", i + 2)));
        out.push(RegretRecord {
            strategy: f[0].to_string(),
            objective: f[1].parse()?,
            dim: int(f[2])?,
            lambda: int(f[3])?,
            replication: int(f[4])?,
            regret: f[5].parse().map_err(|_| Error::Parse(format!("line {}: bad real `{}`", i + 2, f[5])))?,
            optimum_seed: None,
        });
    }
    Ok(out)
}

pub fn read_records_json<R: Read>(r: R) -> Result<Vec<RegretRecord>> {
    Ok(serde_json::from_reader(r)?)
}

pub fn read_win_matrix_json<R: Read>(r: R) -> Result<WinMatrix> {
    Ok(serde_json::from_reader(r)?)
}

pub fn read_win_matrix_csv<R: Read>(r: R) -> Result<WinMatrix> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    ensure!(
        cols.len() >= 3 && cols[0] == "strategy" && cols[cols.len() - 1] == "row_mean",
        Parse,
        "unexpected matrix header `{header}`"
    );
    let strategies: Vec<String> = cols[1..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let (mut matrix, mut row_means) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == cols.len(), Parse, "matrix row {} has {} fields", i + 1, f.len());
        ensure!(f[0] == strategies[i], Parse, "matrix row {} is `{}`, expected `{}`", i + 1, f[0], strategies[i]);
        let vals = f[1..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad real `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        row_means.push(vals[vals.len() - 1]);
        matrix.push(vals[..vals.len() - 1].to_vec());
    }
    ensure!(matrix.len() == strategies.len(), Parse, "matrix has {} rows for {} strategies", matrix.len(), strategies.len());
    Ok(WinMatrix { strategies, matrix, row_means })
}
