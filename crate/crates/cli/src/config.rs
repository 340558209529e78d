//! Flat `key = value` settings with per-subcommand defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Sweep,
    DoeBench,
    TheoryCheck,
    DeBench,
}

impl Command {
    #[cfg(test)]
    pub const ALL: [Command; 4] = [Command::Sweep, Command::DoeBench, Command::TheoryCheck, Command::DeBench];

    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::DoeBench => "doe-bench",
            Command::TheoryCheck => "theory-check",
            Command::DeBench => "de-bench",
        }
    }
}

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

const COMMON: &[Key] = &[
    key("seed", "2021", "master seed"),
    key("workers", "1", "worker threads; results do not depend on it"),
    key("format", "csv", "csv or json"),
    key("output", "", "output file (sweep, theory-check) or directory (benches); empty means stdout"),
];

const SWEEP: &[Key] = &[
    key("objective", "sphere", "sphere, cigar, ellipsoid, rastrigin or hm"),
    key("dim", "20", "dimension d"),
    key("lambda", "100", "budget λ"),
    key("reps", "100000", "replications"),
    key("grid", "0:2:41", "multiples of sqrt(ln λ / d): lo:hi:count or a comma list"),
    key("extra_sigmas", "1", "absolute σ values added to the grid, comma list (may be empty)"),
    key("route", "rotated", "sphere sampling route: rotated or materialized"),
];

const DOE_BENCH: &[Key] = &[
    key("objectives", "sphere,cigar,rastrigin", "objective list"),
    key("dims", "20,200", "dimension list"),
    key("budgets", "30,100,3000", "budget list"),
    key(
        "strategies",
        "Random,Midpoint,LHS,ScrHalton,ScrHammersley,MetaRecentering,MetaTuneRecentering,QORandom,QOScrHammersley,RandomPlusMiddlePoint,ScrHammersleyPlusMiddlePoint",
        "strategy presets or family/rule[+qo][+mid] specs",
    ),
    key("reps", "20", "replications per cell"),
];

const THEORY_CHECK: &[Key] = &[
    key("dim", "1000", "dimension d"),
    key("lambda", "100", "budget λ"),
    key("delta", "0.5", "confidence δ in [0.5, 1)"),
    key("c1", "1", "gain constant: ε = c1 ln λ / d"),
    key("c2", "1", "variance constant: σ² = c2 ln λ / d"),
    key("reps", "10000", "replications"),
    key("route", "rotated", "rotated or materialized"),
];

const DE_BENCH: &[Key] = &[
    key("objectives", "sphere", "objective list"),
    key("dims", "20", "dimension list"),
    key("budgets", "400", "evaluation budget list"),
    key("init_rules", "sqrt", "population rules: sqrt, dim, workers, 30"),
    key("samplers", "MetaTuneRecentering,Random", "initial-design strategies"),
    key("parallelism", "1", "w used by the workers population rule"),
    key("f", "0.8", "differential weight F"),
    key("cr", "0.5", "crossover rate CR"),
    key("reps", "200", "replications"),
];

pub fn keys(cmd: Command) -> impl Iterator<Item = &'static Key> {
    let own = match cmd {
        Command::Sweep => SWEEP,
        Command::DoeBench => DOE_BENCH,
        Command::TheoryCheck => THEORY_CHECK,
        Command::DeBench => DE_BENCH,
    };
    COMMON.iter().chain(own)
}

/// Text appended to each subcommand's `--help`.
pub fn key_reference(cmd: Command) -> String {
    let mut out = String::from("Settings (config file keys, also accepted by --set KEY=VALUE):\n");
    for k in keys(cmd) {
        out.push_str(&format!("  {:<13} {} [default: {}]\n", k.name, k.help, show(k.default)));
    }
    out
}

fn show(v: &str) -> &str {
    if v.is_empty() {
        "\"\""
    } else {
        v
    }
}

#[derive(Debug, PartialEq)]
pub enum CliError {
    /// Bad settings; exit code 2.
    Config(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<oneshot_doe::Error> for CliError {
    fn from(e: oneshot_doe::Error) -> Self {
        match e {
            oneshot_doe::Error::Config(_) | oneshot_doe::Error::Parse(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Resolved settings for one subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    cmd: Command,
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    pub fn defaults(cmd: Command) -> Self {
        Settings { cmd, values: keys(cmd).map(|k| (k.name, k.default.to_string())).collect() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let known = keys(self.cmd)
            .find(|k| k.name == key)
            .ok_or_else(|| CliError::Config(format!("unknown key `{key}` for {}", self.cmd.name())))?;
        self.values.insert(known.name, value.trim().to_string());
        Ok(())
    }

    /// Applies a `KEY=VALUE` string.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{pair}` is not KEY=VALUE")))?;
        self.set(k.trim(), v)
    }

    /// Applies flat `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{origin}:{}: {m}", n + 1)),
                    other => other,
                })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` is not defined for {}", self.cmd.name()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(key);
        v.parse().map_err(|e| CliError::Config(format!("invalid value `{v}` for `{key}`: {e}")))
    }

    /// Comma-separated list; an empty value gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(key);
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse().map_err(|e| CliError::Config(format!("invalid item `{s}` in `{key}`: {e}")))
            })
            .collect()
    }

    /// `lo:hi:count` or a comma list of reals.
    pub fn grid(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let v = self.raw(key);
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() == 3 {
            let bad = |m: &str| CliError::Config(format!("invalid value `{v}` for `{key}`: {m}"));
            let lo: f64 = parts[0].trim().parse().map_err(|_| bad("bad lower end"))?;
            let hi: f64 = parts[1].trim().parse().map_err(|_| bad("bad upper end"))?;
            let count: usize = parts[2].trim().parse().map_err(|_| bad("bad count"))?;
            if count == 0 || hi < lo {
                return Err(bad("need count ≥ 1 and hi ≥ lo"));
            }
            return Ok(oneshot_doe::harness::linear_grid(lo, hi, count));
        }
        self.list(key)
    }
}
