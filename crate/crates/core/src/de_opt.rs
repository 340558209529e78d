//! Differential evolution (rand/1/bin) with a pluggable initial design.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::harness::{cell_seed, design_seed, optimum_seed, RegretRecord, Strategy};
use crate::objectives::{ObjectiveInstance, ObjectiveKind};
use crate::seed::{self, purpose};

pub const DEFAULT_F: f64 = 0.8;
pub const DEFAULT_CR: f64 = 0.5;

/// rand/1/bin needs the target plus three other members.
pub const MIN_POPULATION: usize = 4;

/// How the initial population size follows from budget, dimension and
/// parallelism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PopulationRule {
    /// ⌈√b⌉
    Sqrt,
    /// d
    Dim,
    /// w
    Workers,
    /// 30
    Thirty,
}

impl PopulationRule {
    pub const ALL: [PopulationRule; 4] =
        [PopulationRule::Sqrt, PopulationRule::Dim, PopulationRule::Workers, PopulationRule::Thirty];

    pub fn token(self) -> &'static str {
        match self {
            PopulationRule::Sqrt => "sqrt",
            PopulationRule::Dim => "dim",
            PopulationRule::Workers => "workers",
            PopulationRule::Thirty => "30",
        }
    }

    /// Label used inside strategy names.
    pub fn label(self) -> &'static str {
        match self {
            PopulationRule::Sqrt => "Sqrt",
            PopulationRule::Dim => "Dim",
            PopulationRule::Workers => "Workers",
            PopulationRule::Thirty => "30",
        }
    }
}

impl fmt::Display for PopulationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PopulationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sqrt" => Ok(PopulationRule::Sqrt),
            "dim" => Ok(PopulationRule::Dim),
            "workers" | "w" => Ok(PopulationRule::Workers),
            "30" | "thirty" => Ok(PopulationRule::Thirty),
            _ => Err(Error::Parse(format!("unknown population rule `{s}` (expected sqrt, dim, workers or 30)"))),
        }
    }
}

/// Initial population size for budget `b`, dimension `d`, parallelism `w`,
/// never below [`MIN_POPULATION`].
///
/// ```
/// use oneshot_doe::de_opt::{init_population_size, PopulationRule};
/// assert_eq!(init_population_size(PopulationRule::Sqrt, 100, 7, 1), 10);
/// assert_eq!(init_population_size(PopulationRule::Dim, 100, 3, 1), 4);
/// ```
pub fn init_population_size(rule: PopulationRule, b: usize, d: usize, w: usize) -> usize {
    let raw = match rule {
        PopulationRule::Sqrt => ceil_sqrt(b),
        PopulationRule::Dim => d,
        PopulationRule::Workers => w,
        PopulationRule::Thirty => 30,
    };
    raw.max(MIN_POPULATION)
}

fn ceil_sqrt(b: usize) -> usize {
    let mut r = (b as f64).sqrt() as usize;
    while r * r > b {
        r -= 1;
    }
    while r * r < b {
        r += 1;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    /// Total objective evaluations, the initial design included.
    pub budget: usize,
    /// Parallelism w; only feeds [`PopulationRule::Workers`].
    pub workers: usize,
    pub f: f64,
    pub cr: f64,
    pub init_rule: PopulationRule,
    /// Sampler and scaling of the initial population.
    pub init: Strategy,
    /// Overrides the rule-derived population size.
    pub population: Option<usize>,
    pub seed: u64,
}

impl DeConfig {
    pub fn new(budget: usize, init_rule: PopulationRule, init: Strategy, seed: u64) -> Self {
        DeConfig { budget, workers: 1, f: DEFAULT_F, cr: DEFAULT_CR, init_rule, init, population: None, seed }
    }

    pub fn population_size(&self, dim: usize) -> usize {
        self.population
            .unwrap_or_else(|| init_population_size(self.init_rule, self.budget, dim, self.workers))
    }

    /// `DE+<rule>+<sampler>`, e.g. `DE+Sqrt+MetaTuneRecentering`.
    pub fn name(&self) -> String {
        format!("DE+{}+{}", self.init_rule.label(), self.init.name)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let pop = self.population_size(dim);
        ensure!(dim >= 1, Config, "dim must be at least 1");
        ensure!(self.workers >= 1, Config, "workers must be at least 1");
        ensure!(pop >= MIN_POPULATION, Config, "population {pop} is below {MIN_POPULATION}");
        ensure!(self.budget >= pop, Config, "budget {} is smaller than the population {pop}", self.budget);
        ensure!(self.f.is_finite() && (0.0..=2.0).contains(&self.f), Config, "F must lie in [0, 2], got {}", self.f);
        ensure!((0.0..=1.0).contains(&self.cr), Config, "CR must lie in [0, 1], got {}", self.cr);
        Ok(())
    }
}

/// Result of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptRun {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// (evaluation index from 1, best value so far), one entry per evaluation.
    pub trace: Vec<(usize, f64)>,
}

struct Trace {
    best_point: Vec<f64>,
    best_value: f64,
    entries: Vec<(usize, f64)>,
}

impl Trace {
    fn record(&mut self, x: &[f64], v: f64) {
        if v < self.best_value || self.entries.is_empty() {
            self.best_value = v;
            self.best_point.clear();
            self.best_point.extend_from_slice(x);
        }
        self.entries.push((self.entries.len() + 1, self.best_value));
    }
}

/// Randomness of one trial, drawn before any evaluation of its generation.
struct TrialDraw {
    donors: [usize; 3],
    forced: usize,
    cross: Vec<f64>,
}

fn draw_trial<R: Rng>(rng: &mut R, target: usize, pop: usize, dim: usize) -> TrialDraw {
    let mut donors = [0usize; 3];
    for k in 0..3 {
        donors[k] = loop {
            let c = rng.random_range(0..pop);
            if c != target && !donors[..k].contains(&c) {
                break c;
            }
        };
    }
    let forced = rng.random_range(0..dim);
    let cross = (0..dim).map(|_| rng.random::<f64>()).collect();
    TrialDraw { donors, forced, cross }
}

/// Runs DE/rand/1/bin on `instance` until the budget is spent.
///
/// The initial population is the `cfg.init` design for λ = population
/// size. Each generation draws all mutation and crossover randomness for
/// every target first, then evaluates the trials in target order and
/// replaces a target only by a trial that is no worse.
pub fn de_run(cfg: &DeConfig, instance: &ObjectiveInstance) -> Result<OptRun> {
    let dim = instance.dim();
    cfg.validate(dim)?;
    let pop = cfg.population_size(dim);
    let init = cfg
        .init
        .design(pop, dim, seed::derive(cfg.seed, &[purpose::DE_INIT]))
        .map_err(|e| Error::Config(format!("initial design {} at d={dim}: {e}", cfg.init.name)))?;
    let mut members: Vec<Vec<f64>> = init.rows().map(<[f64]>::to_vec).collect();
    let mut trace = Trace { best_point: Vec::new(), best_value: f64::INFINITY, entries: Vec::with_capacity(cfg.budget) };
    let mut values = Vec::with_capacity(pop);
    for x in &members {
        let v = instance.eval(x)?;
        trace.record(x, v);
        values.push(v);
    }

    let mut rng = seed::stream(seed::derive(cfg.seed, &[purpose::DE_STEP]));
    while trace.entries.len() < cfg.budget {
        let batch = pop.min(cfg.budget - trace.entries.len());
        let draws: Vec<TrialDraw> = (0..batch).map(|i| draw_trial(&mut rng, i, pop, dim)).collect();
        let trials: Vec<Vec<f64>> = draws
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let [a, b, c] = t.donors.map(|k| &members[k]);
                (0..dim)
                    .map(|j| {
                        if j == t.forced || t.cross[j] < cfg.cr {
                            a[j] + cfg.f * (b[j] - c[j])
                        } else {
                            members[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_values: Vec<f64> = trials.iter().map(|x| instance.eval_unchecked(x)).collect();
        for (i, (x, v)) in trials.into_iter().zip(trial_values).enumerate() {
            trace.record(&x, v);
            if v <= values[i] {
                members[i] = x;
                values[i] = v;
            }
        }
    }
    Ok(OptRun {
        best_point: trace.best_point,
        best_value: trace.best_value,
        evaluations: trace.entries.len(),
        trace: trace.entries,
    })
}

/// One DE configuration under a display name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedDe {
    pub name: String,
    pub config: DeConfig,
}

impl From<DeConfig> for NamedDe {
    fn from(config: DeConfig) -> Self {
        NamedDe { name: config.name(), config }
    }
}

/// Every configuration on every (objective, d) problem for `reps`
/// replications. Record λ is the configuration's budget. Within a
/// (problem, budget) cell, replication r uses the same optimum for all
/// configurations; the DE seed depends on the configuration name.
pub fn de_bench(configs: &[NamedDe], problems: &[(ObjectiveKind, usize)], reps: usize, seed: u64) -> Result<Vec<RegretRecord>> {
    ensure!(!configs.is_empty(), Config, "no DE configurations given");
    ensure!(!problems.is_empty(), Config, "no problems given");
    ensure!(reps >= 1, Config, "replications must be at least 1");
    let mut names = std::collections::BTreeSet::new();
    for c in configs {
        ensure!(names.insert(c.name.as_str()), Config, "configuration name `{}` appears twice", c.name);
        ensure!(!c.name.contains([',', '"', '\n', '\r']), Config, "configuration name `{}` is not CSV-safe", c.name);
        for &(_, dim) in problems {
            c.config.validate(dim).map_err(|e| Error::Config(format!("{} at d={dim}: {e}", c.name)))?;
        }
    }
    let mut tasks = Vec::new();
    for &(kind, dim) in problems {
        for c in configs {
            for r in 0..reps {
                tasks.push((kind, dim, c, r));
            }
        }
    }
    tasks
        .par_iter()
        .map(|&(kind, dim, c, r)| {
            let cell = cell_seed(seed, kind, dim, c.config.budget);
            let opt_seed = optimum_seed(cell, r);
            let instance = ObjectiveInstance::sample(kind, dim, opt_seed)?;
            let cfg = DeConfig { seed: design_seed(cell, r, &c.name), ..c.config.clone() };
            let run = de_run(&cfg, &instance)?;
            Ok(RegretRecord {
                strategy: c.name.clone(),
                objective: kind,
                dim,
                lambda: c.config.budget,
                replication: r,
                regret: (run.best_value - instance.infimum()).max(0.0),
                optimum_seed: Some(opt_seed),
            })
        })
        .collect()
}
